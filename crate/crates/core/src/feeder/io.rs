//! Line-oriented dataset files.
//!
//! ```text
//! GPMU-DATA 1 feeder=<hash> T=125 C=9 harmonics=1,3,5 sensors=806,824,836,846
//! NORM <order> <hex: 9 means then 9 stds>
//! EVENT <id> <class> <location> <split> <bus>:<order>:<hex> ...
//! END <record count>
//! ```
//! Every float is stored as the hex of its little-endian bytes, so a round
//! trip is bit-exact.

use std::io::Write as _;
use std::path::Path;

use super::dataset::{Dataset, NormStats};
use super::events::{BusWindows, EventRecord, Split, CHANNELS, HARMONIC_ORDERS};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DATASET_MAGIC: &str = "GPMU-DATA 1";

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    hex::encode(bytes)
}

pub fn decode_f64s(text: &str) -> Option<Vec<f64>> {
    let bytes = hex::decode(text).ok()?;
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    )
}

pub fn dataset_to_string(d: &Dataset) -> String {
    let orders: Vec<String> = HARMONIC_ORDERS.iter().map(u8::to_string).collect();
    let mut out = format!(
        "{DATASET_MAGIC} feeder={} T={} C={CHANNELS} harmonics={} sensors={}\n",
        d.feeder_hash,
        d.window,
        orders.join(","),
        d.sensors.join(",")
    );
    for (slot, h) in HARMONIC_ORDERS.iter().enumerate() {
        let mut v = d.norm.mean[slot].to_vec();
        v.extend_from_slice(&d.norm.std[slot]);
        out.push_str(&format!("NORM {h} {}\n", encode_f64s(&v)));
    }
    for r in &d.records {
        out.push_str(&format!(
            "EVENT {} {} {} {}",
            r.event_id,
            r.class,
            r.location,
            r.split.as_str()
        ));
        for b in &r.blocks {
            for (slot, h) in HARMONIC_ORDERS.iter().enumerate() {
                out.push_str(&format!(" {}:{h}:{}", b.bus, encode_f64s(b.orders[slot].data())));
            }
        }
        out.push('\n');
    }
    out.push_str(&format!("END {}\n", d.records.len()));
    out
}

/// Writes via a temporary sibling file and rename, so readers never see a
/// half-written dataset.
pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), dataset_to_string(d).as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    if !header.starts_with(DATASET_MAGIC)
        || header[DATASET_MAGIC.len()..]
            .chars()
            .next()
            .is_some_and(|c| !c.is_whitespace())
    {
        let got = header.split_whitespace().take(2).collect::<Vec<_>>().join(" ");
        return Err(Error::UnsupportedVersion(format!(
            "expected `{DATASET_MAGIC}`, found `{got}`"
        )));
    }
    let mut feeder_hash = None;
    let mut window = None;
    let mut sensors = None;
    for field in header[DATASET_MAGIC.len()..].split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("bad header field `{field}`")))?;
        match key {
            "feeder" => feeder_hash = Some(value.to_string()),
            "T" => window = Some(value.parse::<usize>().map_err(|_| parse_err(1, "bad T"))?),
            "C" => {
                if value != CHANNELS.to_string() {
                    return Err(Error::UnsupportedVersion(format!("C={value}, expected {CHANNELS}")));
                }
            }
            "harmonics" => {
                if value != "1,3,5" {
                    return Err(Error::UnsupportedVersion(format!("harmonics={value}, expected 1,3,5")));
                }
            }
            "sensors" => sensors = Some(value.split(',').map(str::to_string).collect::<Vec<_>>()),
            _ => return Err(parse_err(1, format!("unknown header field `{key}`"))),
        }
    }
    let feeder_hash = feeder_hash.ok_or_else(|| parse_err(1, "missing feeder"))?;
    let window = window.filter(|&t| t > 0).ok_or_else(|| parse_err(1, "missing T"))?;
    let sensors = sensors.ok_or_else(|| parse_err(1, "missing sensors"))?;

    let mut norm = NormStats::identity();
    let mut seen_norm = [false; 3];
    let mut records = Vec::new();
    let mut end = None;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if end.is_some() {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(lineno, "content after END"));
        }
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("NORM") => {
                let order: u8 = fields
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(lineno, "bad NORM order"))?;
                let slot = HARMONIC_ORDERS
                    .iter()
                    .position(|&h| h == order)
                    .ok_or_else(|| parse_err(lineno, format!("NORM order {order}")))?;
                let v = fields
                    .next()
                    .and_then(decode_f64s)
                    .filter(|v| v.len() == 2 * CHANNELS)
                    .ok_or_else(|| parse_err(lineno, "bad NORM values"))?;
                norm.mean[slot].copy_from_slice(&v[..CHANNELS]);
                norm.std[slot].copy_from_slice(&v[CHANNELS..]);
                seen_norm[slot] = true;
            }
            Some("EVENT") => records.push(parse_record(fields, lineno, window, &sensors)?),
            Some("END") => {
                let n: usize = fields
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(lineno, "bad END count"))?;
                end = Some(n);
            }
            Some(other) => return Err(parse_err(lineno, format!("unknown record type `{other}`"))),
            None => {}
        }
    }
    match end {
        None => {
            return Err(Error::Truncated(format!(
                "no END marker after {} records",
                records.len()
            )))
        }
        Some(n) if n != records.len() => {
            return Err(Error::Truncated(format!(
                "END announces {n} records, found {}",
                records.len()
            )))
        }
        _ => {}
    }
    if seen_norm.iter().any(|s| !s) {
        return Err(parse_err(1, "missing NORM line"));
    }
    let d = Dataset {
        feeder_hash,
        window,
        sensors,
        records,
        norm,
    };
    d.validate()?;
    Ok(d)
}

fn parse_record<'a>(
    mut fields: impl Iterator<Item = &'a str>,
    lineno: usize,
    window: usize,
    sensors: &[String],
) -> Result<EventRecord> {
    let mut next = |what: &str| {
        fields
            .next()
            .ok_or_else(|| parse_err(lineno, format!("missing {what}")))
    };
    let event_id: u64 = next("event id")?
        .parse()
        .map_err(|_| parse_err(lineno, "bad event id"))?;
    let schema = |msg: String| Error::Schema { event_id, msg };
    let class: u8 = next("class")?.parse().map_err(|_| schema("bad class".into()))?;
    let location = next("location")?.to_string();
    let split_str = next("split")?;
    let split = Split::parse(split_str).ok_or_else(|| schema(format!("unknown split `{split_str}`")))?;
    let mut slots: Vec<[Option<Tensor>; 3]> = sensors.iter().map(|_| [None, None, None]).collect();
    for block in fields {
        let mut parts = block.splitn(3, ':');
        let (bus, order, hex) = match (parts.next(), parts.next(), parts.next()) {
            (Some(b), Some(o), Some(h)) => (b, o, h),
            _ => return Err(schema(format!("malformed block `{}`", truncate(block)))),
        };
        let si = sensors
            .iter()
            .position(|s| s == bus)
            .ok_or_else(|| schema(format!("block for unknown bus `{bus}`")))?;
        let slot = order
            .parse::<u8>()
            .ok()
            .and_then(|o| HARMONIC_ORDERS.iter().position(|&h| h == o))
            .ok_or_else(|| schema(format!("unknown harmonic `{order}` at bus {bus}")))?;
        let values = decode_f64s(hex)
            .filter(|v| v.len() == window * CHANNELS)
            .ok_or_else(|| schema(format!("bad matrix for bus {bus} harmonic {order}")))?;
        if slots[si][slot].is_some() {
            return Err(schema(format!("duplicate block for bus {bus} harmonic {order}")));
        }
        slots[si][slot] = Some(Tensor::new(vec![window, CHANNELS], values)?);
    }
    let mut blocks = Vec::with_capacity(sensors.len());
    for (bus, s) in sensors.iter().zip(slots) {
        let [a, b, c] = s;
        match (a, b, c) {
            (Some(a), Some(b), Some(c)) => blocks.push(BusWindows {
                bus: bus.clone(),
                orders: [a, b, c],
            }),
            (a, b, c) => {
                let missing: Vec<u8> = [a.is_none(), b.is_none(), c.is_none()]
                    .iter()
                    .zip(HARMONIC_ORDERS)
                    .filter(|(m, _)| **m)
                    .map(|(_, h)| h)
                    .collect();
                return Err(schema(format!("bus {bus} missing harmonic block(s) {missing:?}")));
            }
        }
    }
    Ok(EventRecord {
        event_id,
        class,
        location,
        split,
        blocks,
    })
}

fn truncate(s: &str) -> &str {
    &s[..s.len().min(24)]
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{generate_dataset, FeederTopology, GeneratorConfig, SplitCounts};

    fn small() -> Dataset {
        let counts = SplitCounts {
            train: 1,
            eval: 1,
            test: 1,
        };
        generate_dataset(&FeederTopology::ieee34(), counts, 11, &GeneratorConfig::default()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let d = small();
        let back = parse_dataset(&dataset_to_string(&d)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn file_round_trip() {
        let d = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/data.gpmu");
        write_dataset(&d, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), d);
    }

    #[test]
    fn altered_magic_is_unsupported_version() {
        let text = dataset_to_string(&small()).replacen("GPMU-DATA 1", "GPMU-DATA 2", 1);
        let err = parse_dataset(&text).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion(_)), "{err}");
        assert!(err.to_string().contains("unsupported version"));
    }

    #[test]
    fn missing_tail_is_truncation() {
        let text = dataset_to_string(&small());
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_dataset(&cut).unwrap_err(), Error::Truncated(_)));
    }

    #[test]
    fn missing_harmonic_block_names_event() {
        let d = small();
        let text = dataset_to_string(&d);
        let victim = d.records[4].event_id;
        let broken: Vec<String> = text
            .lines()
            .map(|l| {
                if l.starts_with(&format!("EVENT {victim} ")) {
                    l.split(' ')
                        .filter(|f| !f.starts_with("836:5:"))
                        .collect::<Vec<_>>()
                        .join(" ")
                } else {
                    l.to_string()
                }
            })
            .collect();
        match parse_dataset(&broken.join("\n")).unwrap_err() {
            Error::Schema { event_id, msg } => {
                assert_eq!(event_id, victim);
                assert!(msg.contains("836"), "{msg}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn hex_floats_are_bit_exact() {
        let v = [0.1, -0.0, f64::MIN_POSITIVE, 1e300];
        let back = decode_f64s(&encode_f64s(&v)).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(decode_f64s("abc").is_none());
    }
}
