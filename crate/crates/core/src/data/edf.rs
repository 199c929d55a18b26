//! European Data Format reader and writer.
//!
//! Layout: a 256-byte ASCII recording header, `ns × 256` bytes of signal
//! headers (each field stored for all signals before the next field), then
//! data records of 16-bit little-endian two's-complement samples. An
//! `EDF Annotations` signal, when present, is decoded into
//! [`Annotation`]s and excluded from the signal list.

use std::path::Path;

use super::session::{Annotation, Channel, EdfHeader, RawSession, SignalMeta};
use crate::error::{Error, Result};

pub const HEADER_BYTES: usize = 256;
pub const SIGNAL_HEADER_BYTES: usize = 256;
pub const ANNOTATIONS_LABEL: &str = "EDF Annotations";

/// Widths of the per-signal header fields, in storage order.
const SIGNAL_FIELDS: [usize; 10] = [16, 80, 8, 8, 8, 8, 8, 80, 8, 32];

/// Total header size for `ns` signals.
pub fn header_len(ns: usize) -> usize {
    HEADER_BYTES + ns * SIGNAL_HEADER_BYTES
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn field(&mut self, width: usize, what: &str) -> Result<(usize, &'a str)> {
        let start = self.pos;
        let end = start + width;
        let raw = self.bytes.get(start..end).ok_or_else(|| Error::Edf {
            offset: start,
            msg: format!("truncated header while reading {what}"),
        })?;
        let text = std::str::from_utf8(raw).map_err(|_| Error::Edf {
            offset: start,
            msg: format!("{what} is not ASCII"),
        })?;
        self.pos = end;
        Ok((start, text.trim_end()))
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, what: &str) -> Result<T> {
        let (offset, text) = self.field(width, what)?;
        text.trim().parse().map_err(|_| Error::Edf {
            offset,
            msg: format!("{what} `{text}` is not numeric"),
        })
    }
}

/// Parses an EDF byte stream, keeping every signal.
pub fn parse_edf(bytes: &[u8]) -> Result<RawSession> {
    parse_edf_filtered(bytes, |_| true)
}

/// Parses an EDF byte stream, keeping only signals accepted by `accept`
/// (e.g. to drop signals whose anti-aliasing filter is inadequate).
pub fn parse_edf_filtered(
    bytes: &[u8],
    accept: impl Fn(&SignalMeta) -> bool,
) -> Result<RawSession> {
    let mut cur = Cursor { bytes, pos: 0 };
    let version = cur.field(8, "version")?.1.to_string();
    let patient = cur.field(80, "patient id")?.1.to_string();
    let recording = cur.field(80, "recording id")?.1.to_string();
    let start_date = cur.field(8, "start date")?.1.to_string();
    let start_time = cur.field(8, "start time")?.1.to_string();
    let header_offset = cur.pos;
    let header_bytes: usize = cur.number(8, "header byte count")?;
    let reserved = cur.field(44, "reserved")?.1.to_string();
    let num_records: i64 = cur.number(8, "number of data records")?;
    let duration_offset = cur.pos;
    let record_duration_s: f64 = cur.number(8, "data record duration")?;
    let ns_offset = cur.pos;
    let ns: usize = cur.number(4, "number of signals")?;
    if ns == 0 {
        return Err(Error::Edf {
            offset: ns_offset,
            msg: "file declares zero signals".into(),
        });
    }
    if header_bytes != header_len(ns) {
        return Err(Error::Edf {
            offset: header_offset,
            msg: format!(
                "header size {header_bytes} does not match {} for {ns} signals",
                header_len(ns)
            ),
        });
    }
    if !(record_duration_s > 0.0) {
        return Err(Error::Edf {
            offset: duration_offset,
            msg: format!("record duration {record_duration_s} must be positive"),
        });
    }

    let mut cols: Vec<Vec<(usize, String)>> = Vec::with_capacity(SIGNAL_FIELDS.len());
    for (fi, &width) in SIGNAL_FIELDS.iter().enumerate() {
        let mut col = Vec::with_capacity(ns);
        for _ in 0..ns {
            let (off, text) = cur.field(width, signal_field_name(fi))?;
            col.push((off, text.to_string()));
        }
        cols.push(col);
    }
    let num = |fi: usize, si: usize| -> Result<f64> {
        let (offset, text) = &cols[fi][si];
        text.trim().parse::<f64>().map_err(|_| Error::Edf {
            offset: *offset,
            msg: format!("{} `{text}` is not numeric", signal_field_name(fi)),
        })
    };
    let mut metas = Vec::with_capacity(ns);
    for si in 0..ns {
        let digital_min = num(5, si)?;
        let digital_max = num(6, si)?;
        let spr = num(8, si)?;
        if digital_min == digital_max {
            return Err(Error::Edf {
                offset: cols[5][si].0,
                msg: format!("signal {si}: digital minimum equals digital maximum"),
            });
        }
        if spr < 1.0 || spr.fract() != 0.0 {
            return Err(Error::Edf {
                offset: cols[8][si].0,
                msg: format!("signal {si}: invalid samples per record {spr}"),
            });
        }
        metas.push(SignalMeta {
            label: cols[0][si].1.clone(),
            transducer: cols[1][si].1.clone(),
            physical_dimension: cols[2][si].1.clone(),
            physical_min: num(3, si)?,
            physical_max: num(4, si)?,
            digital_min: digital_min as i32,
            digital_max: digital_max as i32,
            prefiltering: cols[7][si].1.clone(),
            samples_per_record: spr as usize,
            reserved: cols[9][si].1.clone(),
        });
    }

    let record_bytes: usize = metas.iter().map(|m| m.samples_per_record * 2).sum();
    let data = &bytes[header_bytes..];
    let num_records = if num_records < 0 {
        data.len() / record_bytes
    } else {
        num_records as usize
    };
    if data.len() < num_records * record_bytes {
        return Err(Error::Edf {
            offset: header_bytes + data.len(),
            msg: format!(
                "truncated data: {num_records} records of {record_bytes} bytes need {} bytes, found {}",
                num_records * record_bytes,
                data.len()
            ),
        });
    }

    let mut channels: Vec<Channel> = Vec::new();
    let mut annotations = Vec::new();
    let mut sample_offsets = Vec::with_capacity(ns);
    let mut off = 0;
    for m in &metas {
        sample_offsets.push(off);
        off += m.samples_per_record * 2;
    }
    for (si, meta) in metas.into_iter().enumerate() {
        let spr = meta.samples_per_record;
        if meta.label == ANNOTATIONS_LABEL {
            for r in 0..num_records {
                let start = r * record_bytes + sample_offsets[si];
                let tal_offset = header_bytes + start;
                parse_tals(&data[start..start + spr * 2], tal_offset, &mut annotations)?;
            }
            continue;
        }
        if !accept(&meta) {
            continue;
        }
        let mut samples = Vec::with_capacity(num_records * spr);
        for r in 0..num_records {
            let start = r * record_bytes + sample_offsets[si];
            samples.extend(
                data[start..start + spr * 2]
                    .chunks_exact(2)
                    .map(|b| meta.to_physical(i16::from_le_bytes([b[0], b[1]]))),
            );
        }
        channels.push(Channel {
            label: meta.label.clone(),
            sampling_rate: spr as f64 / record_duration_s,
            samples,
            edf: Some(meta),
        });
    }

    let session = RawSession {
        channels,
        annotations,
        header: Some(EdfHeader {
            version,
            patient,
            recording,
            start_date,
            start_time,
            reserved,
            num_records,
            record_duration_s,
        }),
    };
    if !session.channels.is_empty() {
        session.validate()?;
    }
    Ok(session)
}

fn signal_field_name(i: usize) -> &'static str {
    [
        "label",
        "transducer",
        "physical dimension",
        "physical minimum",
        "physical maximum",
        "digital minimum",
        "digital maximum",
        "prefiltering",
        "samples per record",
        "signal reserved",
    ][i]
}

/// Decodes time-stamped annotation lists from one record's annotation bytes.
/// Entries with no text (record timekeeping) are skipped.
fn parse_tals(raw: &[u8], base_offset: usize, out: &mut Vec<Annotation>) -> Result<()> {
    let mut pos = 0;
    while pos < raw.len() && raw[pos] != 0 {
        let end = raw[pos..]
            .iter()
            .position(|&b| b == 0)
            .map(|e| pos + e)
            .unwrap_or(raw.len());
        let tal = &raw[pos..end];
        let bad = |msg: &str| Error::Edf {
            offset: base_offset + pos,
            msg: format!("annotation: {msg}"),
        };
        let mut parts = tal.split(|&b| b == 0x14);
        let stamp = parts.next().ok_or_else(|| bad("missing onset"))?;
        let stamp = std::str::from_utf8(stamp).map_err(|_| bad("onset is not ASCII"))?;
        let (onset, duration) = match stamp.split_once('\u{15}') {
            Some((o, d)) => (o, Some(d)),
            None => (stamp, None),
        };
        let onset_s: f64 = onset.parse().map_err(|_| bad("onset is not numeric"))?;
        let duration_s = duration
            .map(|d| d.parse::<f64>().map_err(|_| bad("duration is not numeric")))
            .transpose()?;
        for text in parts {
            if text.is_empty() {
                continue;
            }
            let label = std::str::from_utf8(text)
                .map_err(|_| bad("text is not UTF-8"))?
                .to_string();
            out.push(Annotation {
                onset_s,
                duration_s,
                label,
            });
        }
        pos = end + 1;
    }
    Ok(())
}

/// Formats a number into at most 8 ASCII characters.
fn format_number(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 8 {
        return s;
    }
    for prec in (0..8).rev() {
        let s = trim_decimal(format!("{v:.prec$}"));
        if s.len() <= 8 {
            return s;
        }
    }
    format!("{:.0}", v)
}

/// Formats a bound so that the written value does not fall inside the data
/// range (`up` rounds toward +∞).
fn format_bound(v: f64, up: bool) -> String {
    let s = format!("{v}");
    if s.len() <= 8 {
        return s;
    }
    for prec in (0..8).rev() {
        let scale = 10f64.powi(prec as i32);
        let r = if up {
            (v * scale).ceil() / scale
        } else {
            (v * scale).floor() / scale
        };
        let s = trim_decimal(format!("{r:.prec$}"));
        if s.len() <= 8 {
            return s;
        }
    }
    format!("{v:.0}")
}

fn trim_decimal(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn push_field(out: &mut Vec<u8>, text: &str, width: usize) -> Result<()> {
    if !text.is_ascii() || text.len() > width {
        return Err(Error::InvalidInput(format!(
            "EDF field `{text}` does not fit {width} ASCII bytes"
        )));
    }
    out.extend_from_slice(text.as_bytes());
    out.extend(std::iter::repeat_n(b' ', width - text.len()));
    Ok(())
}

/// Calibration for a channel that was not read from EDF: physical range from
/// the data, full 16-bit digital range.
fn default_meta(ch: &Channel, spr: usize) -> SignalMeta {
    let (lo, hi) = ch
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (lo, hi) = if ch.samples.is_empty() {
        (-1.0, 1.0)
    } else {
        (lo, hi)
    };
    let mut pmin: f64 = format_bound(lo, false).parse().unwrap_or(lo);
    let mut pmax: f64 = format_bound(hi, true).parse().unwrap_or(hi);
    if pmax <= pmin {
        pmin -= 1.0;
        pmax += 1.0;
    }
    SignalMeta {
        label: ch.label.clone(),
        transducer: String::new(),
        physical_dimension: "uV".into(),
        physical_min: pmin,
        physical_max: pmax,
        digital_min: -32768,
        digital_max: 32767,
        prefiltering: String::new(),
        samples_per_record: spr,
        reserved: String::new(),
    }
}

fn encode_annotation_records(
    annotations: &[Annotation],
    num_records: usize,
    record_duration_s: f64,
) -> Vec<Vec<u8>> {
    (0..num_records)
        .map(|r| {
            let mut rec = Vec::new();
            let onset = r as f64 * record_duration_s;
            rec.extend_from_slice(format!("+{}\x14\x14\0", onset).as_bytes());
            if r == 0 {
                for a in annotations {
                    let sign = if a.onset_s >= 0.0 { "+" } else { "" };
                    rec.extend_from_slice(format!("{sign}{}", a.onset_s).as_bytes());
                    if let Some(d) = a.duration_s {
                        rec.extend_from_slice(format!("\x15{d}").as_bytes());
                    }
                    rec.push(0x14);
                    rec.extend_from_slice(a.label.as_bytes());
                    rec.extend_from_slice(b"\x14\0");
                }
            }
            rec
        })
        .collect()
}

/// Serializes a session. Channels read from EDF keep their calibration, so
/// `write_edf(&parse_edf(b)?)` reproduces files written by this function.
pub fn write_edf(session: &RawSession) -> Result<Vec<u8>> {
    session.validate()?;
    let mut header = session.header.clone().unwrap_or_default();
    let duration = header.record_duration_s;
    let spr_of = |ch: &Channel| -> Result<usize> {
        let spr = ch.sampling_rate * duration;
        if (spr - spr.round()).abs() > 1e-9 || spr.round() < 1.0 {
            return Err(Error::InvalidInput(format!(
                "channel `{}` at {} Hz does not fit whole samples in {duration} s records",
                ch.label, ch.sampling_rate
            )));
        }
        Ok(spr.round() as usize)
    };
    let mut metas = Vec::with_capacity(session.channels.len() + 1);
    let mut num_records = 0;
    for ch in &session.channels {
        let spr = spr_of(ch)?;
        let meta = match &ch.edf {
            Some(m) if m.samples_per_record == spr => m.clone(),
            _ => default_meta(ch, spr),
        };
        num_records = num_records.max(ch.samples.len().div_ceil(spr));
        metas.push(meta);
    }
    let ann_records = if session.annotations.is_empty() {
        None
    } else {
        let recs = encode_annotation_records(&session.annotations, num_records, duration);
        let spr = recs.iter().map(|r| r.len().div_ceil(2)).max().unwrap_or(1);
        metas.push(SignalMeta {
            label: ANNOTATIONS_LABEL.into(),
            transducer: String::new(),
            physical_dimension: String::new(),
            physical_min: -1.0,
            physical_max: 1.0,
            digital_min: -32768,
            digital_max: 32767,
            prefiltering: String::new(),
            samples_per_record: spr,
            reserved: String::new(),
        });
        if header.reserved.is_empty() {
            header.reserved = "EDF+C".into();
        }
        Some(recs)
    };
    header.num_records = num_records;
    let ns = metas.len();

    let mut out = Vec::with_capacity(header_len(ns));
    push_field(&mut out, &header.version, 8)?;
    push_field(&mut out, &header.patient, 80)?;
    push_field(&mut out, &header.recording, 80)?;
    push_field(&mut out, &header.start_date, 8)?;
    push_field(&mut out, &header.start_time, 8)?;
    push_field(&mut out, &header_len(ns).to_string(), 8)?;
    push_field(&mut out, &header.reserved, 44)?;
    push_field(&mut out, &num_records.to_string(), 8)?;
    push_field(&mut out, &format_number(duration), 8)?;
    push_field(&mut out, &ns.to_string(), 4)?;
    for m in &metas {
        push_field(&mut out, &m.label, 16)?;
    }
    for m in &metas {
        push_field(&mut out, &m.transducer, 80)?;
    }
    for m in &metas {
        push_field(&mut out, &m.physical_dimension, 8)?;
    }
    for m in &metas {
        push_field(&mut out, &format_number(m.physical_min), 8)?;
    }
    for m in &metas {
        push_field(&mut out, &format_number(m.physical_max), 8)?;
    }
    for m in &metas {
        push_field(&mut out, &m.digital_min.to_string(), 8)?;
    }
    for m in &metas {
        push_field(&mut out, &m.digital_max.to_string(), 8)?;
    }
    for m in &metas {
        push_field(&mut out, &m.prefiltering, 80)?;
    }
    for m in &metas {
        push_field(&mut out, &m.samples_per_record.to_string(), 8)?;
    }
    for m in &metas {
        push_field(&mut out, &m.reserved, 32)?;
    }
    debug_assert_eq!(out.len(), header_len(ns));

    for r in 0..num_records {
        for (ch, meta) in session.channels.iter().zip(&metas) {
            let spr = meta.samples_per_record;
            for i in r * spr..(r + 1) * spr {
                let v = ch.samples.get(i).copied().unwrap_or(0.0);
                out.extend_from_slice(&meta.to_digital(v).to_le_bytes());
            }
        }
        if let Some(recs) = &ann_records {
            let spr = metas[ns - 1].samples_per_record;
            let rec = &recs[r];
            out.extend_from_slice(rec);
            out.extend(std::iter::repeat_n(0u8, spr * 2 - rec.len()));
        }
    }
    Ok(out)
}

pub fn read_edf(path: impl AsRef<Path>) -> Result<RawSession> {
    parse_edf(&std::fs::read(path)?)
}

pub fn write_edf_file(session: &RawSession, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_edf(session)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_channel_session() -> RawSession {
        let a: Vec<f64> = (0..512).map(|i| (i as f64 * 0.1).sin() * 50.0).collect();
        let b: Vec<f64> = (0..512)
            .map(|i| (i as f64 * 0.03).cos() * 20.0 - 3.0)
            .collect();
        RawSession::new(
            vec![Channel::new("Fp1", 256.0, a), Channel::new("Cz", 256.0, b)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn header_length_for_two_signals() {
        assert_eq!(header_len(2), 768);
        let bytes = write_edf(&two_channel_session()).unwrap();
        assert_eq!(&bytes[184..192], b"768     ");
        assert_eq!(bytes.len(), 768 + 2 * 256 * 2 * 2);
    }

    #[test]
    fn digital_zero_maps_near_zero() {
        let meta = SignalMeta {
            label: "x".into(),
            transducer: String::new(),
            physical_dimension: "uV".into(),
            physical_min: -1000.0,
            physical_max: 1000.0,
            digital_min: -32768,
            digital_max: 32767,
            prefiltering: String::new(),
            samples_per_record: 1,
            reserved: String::new(),
        };
        // -1000 + 32768 · 2000/65535
        let expected = -1000.0 + 32768.0 * 2000.0 / 65535.0;
        assert!((meta.to_physical(0) - expected).abs() < 1e-12);
        assert!((meta.to_physical(0) - 0.0153).abs() < 1e-4);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let mut s = two_channel_session();
        s.annotations = vec![
            Annotation {
                onset_s: 0.5,
                duration_s: Some(1.0),
                label: "T1".into(),
            },
            Annotation {
                onset_s: 1.25,
                duration_s: None,
                label: "T2".into(),
            },
        ];
        let bytes = write_edf(&s).unwrap();
        let parsed = parse_edf(&bytes).unwrap();
        assert_eq!(parsed.channels.len(), 2);
        assert_eq!(parsed.annotations, s.annotations);
        assert_eq!(write_edf(&parsed).unwrap(), bytes);
    }

    #[test]
    fn quantization_error_is_bounded() {
        let s = two_channel_session();
        let parsed = parse_edf(&write_edf(&s).unwrap()).unwrap();
        for (orig, back) in s.channels.iter().zip(&parsed.channels) {
            let half_step = back.edf.as_ref().unwrap().resolution() / 2.0;
            for (a, b) in orig.samples.iter().zip(&back.samples) {
                assert!((a - b).abs() <= half_step * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn truncated_inputs_report_offsets() {
        let bytes = write_edf(&two_channel_session()).unwrap();
        match parse_edf(&bytes[..100]) {
            Err(Error::Edf { offset, .. }) => assert_eq!(offset, 88),
            other => panic!("unexpected {other:?}"),
        }
        match parse_edf(&bytes[..bytes.len() - 10]) {
            Err(Error::Edf { msg, .. }) => assert!(msg.contains("truncated data")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_degenerate_fields() {
        let mut bytes = write_edf(&two_channel_session()).unwrap();
        bytes[236..244].copy_from_slice(b"abc     ");
        assert!(matches!(
            parse_edf(&bytes),
            Err(Error::Edf { offset: 236, .. })
        ));

        let mut bytes = write_edf(&two_channel_session()).unwrap();
        // digital maximum of signal 0 := digital minimum
        let dmax_off = 256 + 2 * (16 + 80 + 8 + 8 + 8 + 8);
        bytes[dmax_off..dmax_off + 8].copy_from_slice(b"-32768  ");
        assert!(matches!(parse_edf(&bytes), Err(Error::Edf { .. })));
    }

    #[test]
    fn filter_hook_drops_signals() {
        let bytes = write_edf(&two_channel_session()).unwrap();
        let s = parse_edf_filtered(&bytes, |m| m.label != "Cz").unwrap();
        assert_eq!(s.channel_labels(), vec!["Fp1"]);
    }

    #[test]
    fn number_formatting_fits() {
        assert_eq!(format_number(-1000.0), "-1000");
        assert_eq!(format_number(0.5), "0.5");
        assert!(format_number(-49.99987654321).len() <= 8);
        let up: f64 = format_bound(12.3456789, true).parse().unwrap();
        assert!(up >= 12.3456789);
        let down: f64 = format_bound(-12.3456789, false).parse().unwrap();
        assert!(down <= -12.3456789);
    }
}
