//! Annual to daily to hourly demand scaling and response-rate splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day-type weights used to turn an annual count into a working-day count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayTypeCalendar {
    pub working_days: u32,
    pub saturdays: u32,
    pub sundays_holidays: u32,
    pub saturday_factor: f64,
    pub sunday_factor: f64,
}

impl Default for DayTypeCalendar {
    /// Italian calendar: 251 working days, 51 Saturdays, 51 Sundays plus 12
    /// holidays.
    fn default() -> Self {
        DayTypeCalendar {
            working_days: 251,
            saturdays: 51,
            sundays_holidays: 63,
            saturday_factor: 0.679,
            sunday_factor: 0.494,
        }
    }
}

impl DayTypeCalendar {
    pub fn validate(&self) -> Result<()> {
        if self.working_days == 0 || self.saturdays == 0 || self.sundays_holidays == 0 {
            return Err(Error::invalid("calendar day counts must be positive"));
        }
        for f in [self.saturday_factor, self.sunday_factor] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid(format!(
                    "calendar factor {f} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Working-day equivalents in a year.
    pub fn divisor(&self) -> f64 {
        self.working_days as f64
            + self.saturday_factor * self.saturdays as f64
            + self.sunday_factor * self.sundays_holidays as f64
    }
}

/// Fraction of the daily flow in each hour of the day. Hours may be left
/// undefined when the source data only covers part of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfile {
    pub fraction_by_hour: [Option<f64>; 24],
}

/// Noon share of a working day's traffic.
pub const NOON_FRACTION: f64 = 0.0534;

/// Hourly flows at the closed section for 12:00, 13:00 and 14:00 (veh/h).
pub const A1_HOURLY_FLOWS: [f64; 3] = [3750.84, 3694.65, 4045.85];

impl Default for HourlyProfile {
    /// The noon fraction, with 13:00 and 14:00 back-computed from the
    /// observed hourly flows against the same daily total.
    fn default() -> Self {
        let daily = A1_HOURLY_FLOWS[0] / NOON_FRACTION;
        let mut fraction_by_hour = [None; 24];
        fraction_by_hour[12] = Some(NOON_FRACTION);
        fraction_by_hour[13] = Some(A1_HOURLY_FLOWS[1] / daily);
        fraction_by_hour[14] = Some(A1_HOURLY_FLOWS[2] / daily);
        HourlyProfile { fraction_by_hour }
    }
}

impl HourlyProfile {
    pub fn validate(&self) -> Result<()> {
        let mut sum = 0.0;
        for (h, f) in self.fraction_by_hour.iter().enumerate() {
            if let Some(f) = f {
                if !(0.0..=1.0).contains(f) {
                    return Err(Error::invalid(format!(
                        "hour {h} fraction {f} outside [0, 1]"
                    )));
                }
                sum += f;
            }
        }
        if sum > 1.0 + 1e-9 {
            return Err(Error::invalid(format!("hourly fractions sum to {sum} > 1")));
        }
        Ok(())
    }

    pub fn fraction(&self, hour: u32) -> Result<f64> {
        self.fraction_by_hour
            .get(hour as usize)
            .copied()
            .flatten()
            .ok_or(Error::UndefinedHour(hour))
    }
}

pub fn annual_to_daily(annual_flow: f64, cal: &DayTypeCalendar) -> Result<f64> {
    if !(annual_flow >= 0.0) {
        return Err(Error::invalid(format!(
            "annual flow must be >= 0, got {annual_flow}"
        )));
    }
    Ok(annual_flow / cal.divisor())
}

pub fn daily_to_hourly(daily_flow: f64, hour: u32, profile: &HourlyProfile) -> Result<f64> {
    Ok(daily_flow * profile.fraction(hour)?)
}

/// Daily flow needed to produce `hourly_flow` in `hour`.
pub fn hourly_to_daily(hourly_flow: f64, hour: u32, profile: &HourlyProfile) -> Result<f64> {
    let f = profile.fraction(hour)?;
    if f == 0.0 {
        return Err(Error::invalid(format!("hour {hour} has a zero fraction")));
    }
    Ok(hourly_flow / f)
}

/// Splits a flow into the part that follows diversion instructions and the
/// part that stays. Returns `(diverted, remaining)`.
pub fn split_by_response(flow: f64, response_rate: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&response_rate) {
        return Err(Error::invalid(format!(
            "response rate {response_rate} outside [0, 1]"
        )));
    }
    let diverted = response_rate * flow;
    Ok((diverted, flow - diverted))
}

/// Distributes a diverted flow over branches in proportion to `weights`.
pub fn branch_split(diverted: f64, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("branch weights must be nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("branch weights sum to {sum}, not 1")));
    }
    Ok(weights.iter().map(|w| w * diverted).collect())
}

/// Mean time gap between vehicles, in minutes.
pub fn headway_minutes(flow: f64) -> Result<f64> {
    if !(flow > 0.0) {
        return Err(Error::invalid(format!("flow must be > 0, got {flow}")));
    }
    Ok(60.0 / flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn calendar_divisor() {
        assert!((DayTypeCalendar::default().divisor() - 316.751).abs() < 1e-9);
    }

    #[test]
    fn annual_scaling() {
        let cal = DayTypeCalendar::default();
        assert_eq!(annual_to_daily(0.0, &cal).unwrap(), 0.0);
        assert!((annual_to_daily(316.751, &cal).unwrap() - 1.0).abs() < 1e-12);
        assert!((annual_to_daily(316_751.0, &cal).unwrap() - 1000.0).abs() < 1e-9);
        assert!(annual_to_daily(-1.0, &cal).is_err());
    }

    #[test]
    fn hourly_scaling() {
        let p = HourlyProfile::default();
        assert!((daily_to_hourly(1000.0, 12, &p).unwrap() - 53.4).abs() < 1e-9);
        assert_eq!(daily_to_hourly(0.0, 12, &p).unwrap(), 0.0);
        assert!(matches!(
            daily_to_hourly(1000.0, 3, &p),
            Err(Error::UndefinedHour(3))
        ));
        p.validate().unwrap();
    }

    #[test]
    fn inverse_of_noon_scaling() {
        let p = HourlyProfile::default();
        let daily = hourly_to_daily(3750.84, 12, &p).unwrap();
        assert!((daily - 70_240.449_438_2).abs() < 1e-6);
        assert!((daily_to_hourly(daily, 12, &p).unwrap() - 3750.84).abs() < 1e-9);
        // the derived afternoon fractions reproduce the observed flows
        assert!((daily_to_hourly(daily, 13, &p).unwrap() - 3694.65).abs() < 1e-9);
        assert!((daily_to_hourly(daily, 14, &p).unwrap() - 4045.85).abs() < 1e-9);
    }

    #[test]
    fn response_split() {
        assert_eq!(split_by_response(3750.0, 0.6).unwrap(), (2250.0, 1500.0));
        assert_eq!(split_by_response(3750.0, 0.0).unwrap(), (0.0, 3750.0));
        assert_eq!(split_by_response(3750.0, 1.0).unwrap(), (3750.0, 0.0));
        assert!(split_by_response(3750.0, 1.2).is_err());
        assert!(split_by_response(3750.0, -0.1).is_err());
    }

    #[test]
    fn branches() {
        let b = branch_split(3750.0, &[0.56, 0.44]).unwrap();
        assert!((b[0] - 2100.0).abs() < 1e-9 && (b[1] - 1650.0).abs() < 1e-9);
        assert_eq!(branch_split(812.5, &[1.0]).unwrap(), vec![812.5]);
        assert_eq!(branch_split(1000.0, &[0.5, 0.5]).unwrap(), vec![500.0, 500.0]);
        assert!(branch_split(1000.0, &[0.5, 0.4]).is_err());
        assert!(branch_split(1000.0, &[1.5, -0.5]).is_err());
    }

    #[test]
    fn headways() {
        let round4 = |x: f64| (x * 1e4).round() / 1e4;
        assert_eq!(round4(headway_minutes(3750.84).unwrap()), 0.0160);
        assert_eq!(round4(headway_minutes(3694.65).unwrap()), 0.0162);
        assert_eq!(round4(headway_minutes(4045.85).unwrap()), 0.0148);
        assert_eq!(headway_minutes(60.0).unwrap(), 1.0);
        assert!(headway_minutes(0.0).is_err());
    }

    proptest! {
        #[test]
        fn annual_is_linear(a in 0.0..1e7f64, b in 0.0..1e7f64) {
            let cal = DayTypeCalendar::default();
            let lhs = annual_to_daily(a + b, &cal).unwrap();
            let rhs = annual_to_daily(a, &cal).unwrap() + annual_to_daily(b, &cal).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }

        #[test]
        fn split_conserves(flow in 0.0..1e5f64, rate in 0.0..=1.0f64) {
            let (d, r) = split_by_response(flow, rate).unwrap();
            prop_assert!((d + r - flow).abs() <= f64::EPSILON * flow);
            prop_assert!(d >= 0.0 && r >= 0.0);
        }

        #[test]
        fn headway_times_flow(flow in 1e-3..1e5f64) {
            let h = headway_minutes(flow).unwrap();
            prop_assert!((h * flow - 60.0).abs() < 1e-9);
        }
    }
}
