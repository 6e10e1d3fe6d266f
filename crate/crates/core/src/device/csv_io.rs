//! CSV forms of datasets, drive waveforms and traces. States are written
//! as 0 (superconducting) and 1 (resistive).

use std::io::{Read, Write};

use super::{DeviceState, DriveWaveform, IvRecord, SwitchRecord, TransientTrace};
use crate::error::{Error, Result};

pub const IV_HEADER: [&str; 4] = ["i_g_uA", "i_b_uA", "state", "v_l_V"];
pub const SWITCHING_HEADER: [&str; 3] = ["i_b_uA", "state", "i_switch_uA"];
pub const TRACE_HEADER: [&str; 6] = ["t_s", "i_g_uA", "i_b_uA", "state", "v_l_V", "q_event"];
pub const WAVEFORM_HEADER: [&str; 3] = ["t_s", "i_g_uA", "i_b_uA"];

fn csv_err(e: csv::Error) -> Error {
    let location = e
        .position()
        .map_or_else(|| "unknown position".to_string(), |p| format!("line {}", p.line()));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::parse(location, format!("{other:?}")),
    }
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for row in rows {
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a CSV with exactly `header`, handing each record and its line
/// number to `row`.
fn read_rows<R: Read>(
    r: R,
    header: &[&str],
    mut row: impl FnMut(&csv::StringRecord, u64) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let found = rdr.headers().map_err(csv_err)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::parse(
            "line 1",
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        row(&rec, line)?;
    }
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<f64> {
    let raw = rec.get(i).unwrap_or("");
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(format!("line {line}"), format!("{name}: not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(format!("line {line}"), format!("{name} must be finite")));
    }
    Ok(v)
}

fn current(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<f64> {
    let v = field(rec, i, name, line)?;
    if v < 0.0 {
        return Err(Error::parse(format!("line {line}"), format!("{name} must be non-negative")));
    }
    Ok(v)
}

fn state_field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<DeviceState> {
    let raw = rec.get(i).unwrap_or("");
    match raw {
        "0" => Ok(DeviceState::Superconducting),
        "1" => Ok(DeviceState::Resistive),
        _ => Err(Error::parse(format!("line {line}"), format!("state must be 0 or 1, found {raw:?}"))),
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

pub fn write_iv_csv<W: Write>(w: W, records: &[IvRecord]) -> Result<()> {
    write_rows(
        w,
        &IV_HEADER,
        records.iter().map(|r| {
            vec![num(r.i_g), num(r.i_b), r.state.code().to_string(), num(r.v_l)]
        }),
    )
}

pub fn read_iv_csv<R: Read>(r: R) -> Result<Vec<IvRecord>> {
    let mut out = Vec::new();
    read_rows(r, &IV_HEADER, |rec, line| {
        out.push(IvRecord {
            i_g: current(rec, 0, "i_g_uA", line)?,
            i_b: current(rec, 1, "i_b_uA", line)?,
            state: state_field(rec, 2, line)?,
            v_l: field(rec, 3, "v_l_V", line)?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_switching_csv<W: Write>(w: W, records: &[SwitchRecord]) -> Result<()> {
    write_rows(
        w,
        &SWITCHING_HEADER,
        records
            .iter()
            .map(|r| vec![num(r.i_b), r.state.code().to_string(), num(r.i_switch)]),
    )
}

pub fn read_switching_csv<R: Read>(r: R) -> Result<Vec<SwitchRecord>> {
    let mut out = Vec::new();
    read_rows(r, &SWITCHING_HEADER, |rec, line| {
        out.push(SwitchRecord {
            i_b: current(rec, 0, "i_b_uA", line)?,
            state: state_field(rec, 1, line)?,
            i_switch: current(rec, 2, "i_switch_uA", line)?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_waveform_csv<W: Write>(w: W, drive: &DriveWaveform) -> Result<()> {
    write_rows(
        w,
        &WAVEFORM_HEADER,
        (0..drive.len()).map(|k| vec![num(drive.t[k]), num(drive.i_g[k]), num(drive.i_b[k])]),
    )
}

pub fn read_waveform_csv<R: Read>(r: R) -> Result<DriveWaveform> {
    let (mut t, mut i_g, mut i_b) = (Vec::new(), Vec::new(), Vec::new());
    read_rows(r, &WAVEFORM_HEADER, |rec, line| {
        t.push(field(rec, 0, "t_s", line)?);
        i_g.push(current(rec, 1, "i_g_uA", line)?);
        i_b.push(current(rec, 2, "i_b_uA", line)?);
        Ok(())
    })?;
    DriveWaveform::new(t, i_g, i_b)
}

pub fn write_trace_csv<W: Write>(w: W, trace: &TransientTrace) -> Result<()> {
    let mut events = trace.q_events.iter().peekable();
    write_rows(
        w,
        &TRACE_HEADER,
        (0..trace.len()).map(|k| {
            let ev = if events.peek() == Some(&&k) {
                events.next();
                "1"
            } else {
                "0"
            };
            vec![
                num(trace.t[k]),
                num(trace.i_g[k]),
                num(trace.i_b[k]),
                trace.state[k].code().to_string(),
                num(trace.v_l[k]),
                ev.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{generate_dataset, triangular_drive, GroundTruthConfig, SweepProtocol};

    #[test]
    fn datasets_round_trip_exactly() {
        let protocol = SweepProtocol {
            bias_levels: vec![16.5],
            repeats: 3,
            ..SweepProtocol::default()
        };
        let data = generate_dataset(&GroundTruthConfig::default(), &protocol, 4).unwrap();
        let mut buf = Vec::new();
        write_iv_csv(&mut buf, &data.iv).unwrap();
        assert!(buf.starts_with(b"i_g_uA,i_b_uA,state,v_l_V\n"));
        assert_eq!(read_iv_csv(&buf[..]).unwrap(), data.iv);
        let mut buf = Vec::new();
        write_switching_csv(&mut buf, &data.switching).unwrap();
        assert_eq!(read_switching_csv(&buf[..]).unwrap(), data.switching);
    }

    #[test]
    fn waveform_round_trip() {
        let d = triangular_drive(3.0, 20.0, 2, 7, 1e-9).unwrap();
        let mut buf = Vec::new();
        write_waveform_csv(&mut buf, &d).unwrap();
        assert_eq!(read_waveform_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "i_g_uA,i_b_uA,state,v_l_V\n0,14,0,0.0\n0.05,14,2,0.0\n";
        match read_iv_csv(bad.as_bytes()).unwrap_err() {
            Error::Parse { location, message } => {
                assert_eq!(location, "line 3");
                assert!(message.contains("state"));
            }
            e => panic!("{e:?}"),
        }
        let neg = "i_b_uA,state,i_switch_uA\n-1,0,1.4\n";
        assert!(matches!(read_switching_csv(neg.as_bytes()), Err(Error::Parse { .. })));
        let header = "i_g,i_b,state,v\n";
        match read_iv_csv(header.as_bytes()).unwrap_err() {
            Error::Parse { location, .. } => assert_eq!(location, "line 1"),
            e => panic!("{e:?}"),
        }
        let short = "i_g_uA,i_b_uA,state,v_l_V\n0,14,0\n";
        assert!(matches!(read_iv_csv(short.as_bytes()), Err(Error::Parse { .. })));
    }
}
