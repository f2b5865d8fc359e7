use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::sweep::Aggregate;

pub const COLUMNS: [&str; 15] = [
    "scheme",
    "info_target",
    "K",
    "snr_db",
    "x_bound",
    "channel",
    "trials",
    "mse",
    "mse_ci95",
    "mean_stop",
    "stop_ci95",
    "bits_v",
    "bits_u",
    "bits_final",
    "seed",
];

/// Writes the header and one row per aggregate. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(out: W, aggregates: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for a in aggregates {
        w.write_record([
            a.scheme.name().to_string(),
            a.info_target.to_string(),
            a.sensors.to_string(),
            a.snr_db.to_string(),
            a.x_bound.to_string(),
            a.channel.name().to_string(),
            a.trials.to_string(),
            a.mse.to_string(),
            a.mse_ci95.to_string(),
            a.mean_stop.to_string(),
            a.stop_ci95.to_string(),
            a.bits_v.to_string(),
            a.bits_u.to_string(),
            a.bits_final.to_string(),
            a.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(aggregates: &[Aggregate], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    write_csv(std::io::BufWriter::new(file), aggregates)
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<Aggregate>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(Error::InvalidInput(format!("unexpected CSV header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str| Error::InvalidInput(format!("row {}: bad {col}", i + 1));
        let f = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(COLUMNS[j]));
        out.push(Aggregate {
            scheme: rec[0].parse()?,
            info_target: f(1)?,
            sensors: rec[2].parse().map_err(|_| bad("K"))?,
            snr_db: f(3)?,
            x_bound: f(4)?,
            channel: rec[5].parse()?,
            trials: rec[6].parse().map_err(|_| bad("trials"))?,
            mse: f(7)?,
            mse_ci95: f(8)?,
            mean_stop: f(9)?,
            stop_ci95: f(10)?,
            bits_v: f(11)?,
            bits_u: f(12)?,
            bits_final: f(13)?,
            seed: rec[14].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(out)
}

pub fn load_csv(path: &Path) -> Result<Vec<Aggregate>> {
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::SchemeKind;
    use crate::experiments::ChannelKind;

    fn sample() -> Aggregate {
        Aggregate {
            scheme: SchemeKind::LtDsDmle,
            info_target: 25.0 * 2f64.powf(1.37),
            sensors: 5,
            snr_db: -20.0,
            x_bound: 5.0 * 10f64.sqrt(),
            channel: ChannelKind::Rayleigh,
            trials: 10_000,
            mse: 1.0 / 3.0,
            mse_ci95: 1e-17,
            mean_stop: 12.3456789012345,
            stop_ci95: 0.0,
            bits_v: 4.2,
            bits_u: 3.0,
            bits_final: 0.0,
            seed: u64::MAX,
        }
    }

    #[test]
    fn header_only() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), COLUMNS.join(","));
    }

    #[test]
    fn roundtrip_and_width() {
        let a = vec![sample(), Aggregate { scheme: SchemeKind::Centralized, ..sample() }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().all(|l| l.split(',').count() == 15));
        assert_eq!(read_csv(&buf[..]).unwrap(), a);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
