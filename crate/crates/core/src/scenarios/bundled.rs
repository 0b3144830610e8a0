//! A synthetic "realistic day": a two-peak substation demand curve sampled
//! every 15 minutes (ISO-8601 timestamps) and a PV output curve with passing
//! clouds sampled every 10 minutes (fractional hours). Shape only; these are
//! not measurements.

use log::info;

use super::{load_csv_profile_from_reader, CsvOptions, Profile, Scenario, ScenarioError};

pub const LOAD_CSV: &str = include_str!("../../data/realistic_day_load.csv");
pub const PV_CSV: &str = include_str!("../../data/realistic_day_pv.csv");
pub const LOAD_COLUMN: &str = "load_mw";
pub const PV_COLUMN: &str = "pv_mw";

/// Both profiles resampled to `slot_hours` over `[0 h, 24 h)`.
pub fn realistic_day(slot_hours: f64) -> Result<Scenario, ScenarioError> {
    info!("using the bundled realistic-day profiles (synthetic, not measured data)");
    let n = (24.0 / slot_hours).round() as usize;
    let window = Some((0.0, n));
    let load = load_csv_profile_from_reader(
        LOAD_CSV.as_bytes(),
        &CsvOptions {
            window,
            ..CsvOptions::new(LOAD_COLUMN, slot_hours)
        },
    )?;
    let pv = load_csv_profile_from_reader(
        PV_CSV.as_bytes(),
        &CsvOptions {
            window,
            clamp_non_negative: true,
            ..CsvOptions::new(PV_COLUMN, slot_hours)
        },
    )?;
    Scenario::new(load, pv)
}

pub fn realistic_day_load(slot_hours: f64) -> Result<Profile, ScenarioError> {
    Ok(realistic_day(slot_hours)?.load)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_on_five_minute_grid() {
        let s = realistic_day(5.0 / 60.0).unwrap();
        assert_eq!(s.len(), 288);
        assert!(s.res.values.iter().all(|v| *v >= 0.0));
        // night without sun, midday with
        assert_eq!(s.res.values[0], 0.0);
        assert!(s.res.values[s.res.slot_at(12.0).unwrap()] > 5.0);
        // evening peak above the night level
        let evening = s.load.values[s.load.slot_at(19.75).unwrap()];
        assert!(evening > s.load.values[s.load.slot_at(3.0).unwrap()] + 10.0);
    }
}
