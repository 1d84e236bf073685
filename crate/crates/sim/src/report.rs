//! Text reports for the `report` subcommand.

use std::f64::consts::PI;
use std::fmt;

use gyroegg_core::gear::{bevel_gear_diameters, ideal_gear_ratio, select_tooth_counts, GearTrainSpec};
use gyroegg_core::harness::Scenario;
use gyroegg_core::power::{runtime_estimate, simulate_runtime, LoadProfile};
use gyroegg_core::Result;

/// Tooth budget searched for the chosen pair.
pub const MAX_TEETH: u32 = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct GearReport {
    pub radius_m: f64,
    pub tan_pi_16: f64,
    pub tan_pi_8: f64,
    pub big_diameter_m: f64,
    pub small_diameter_m: f64,
    pub ideal_ratio: f64,
    pub teeth_big: u32,
    pub teeth_small: u32,
    pub chosen_ratio: f64,
}

pub fn gear_report(radius_m: f64) -> Result<GearReport> {
    let (big, small) = bevel_gear_diameters(radius_m)?;
    let ideal = ideal_gear_ratio();
    let (teeth_big, teeth_small) = select_tooth_counts(ideal, MAX_TEETH)?;
    Ok(GearReport {
        radius_m,
        tan_pi_16: (PI / 16.0).tan(),
        tan_pi_8: (PI / 8.0).tan(),
        big_diameter_m: big,
        small_diameter_m: small,
        ideal_ratio: ideal,
        teeth_big,
        teeth_small,
        chosen_ratio: f64::from(teeth_small) / f64::from(teeth_big),
    })
}

impl fmt::Display for GearReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "quantity                 value")?;
        writeln!(f, "radius_m                 {:.6}", self.radius_m)?;
        writeln!(f, "tan(pi/16)               {:.6}", self.tan_pi_16)?;
        writeln!(f, "tan(pi/8)                {:.6}", self.tan_pi_8)?;
        writeln!(f, "big_gear_diameter_m      {:.6}", self.big_diameter_m)?;
        writeln!(f, "small_gear_diameter_m    {:.6}", self.small_diameter_m)?;
        writeln!(f, "ideal_ratio              {:.6}", self.ideal_ratio)?;
        writeln!(f, "teeth                    {}:{}", self.teeth_big, self.teeth_small)?;
        writeln!(f, "chosen_ratio             {:.6}", self.chosen_ratio)?;
        write!(f, "ratio_error              {:.6}", self.chosen_ratio - self.ideal_ratio)
    }
}

pub fn default_gear_radius_m() -> f64 {
    GearTrainSpec::default().r_m
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRuntime {
    pub name: &'static str,
    pub pack_current_a: f64,
    /// Minutes at the full-charge draw.
    pub estimate_min: Option<f64>,
    /// Minutes until the pack trips, stepping the voltage curve.
    pub simulated_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub pack_voltage_v: f64,
    pub pack_energy_wh: f64,
    pub profiles: Vec<ProfileRuntime>,
}

pub fn power_report(scenario: &Scenario) -> Result<PowerReport> {
    let pack = &scenario.battery;
    let chain = &scenario.chain;
    let mut profiles = Vec::new();
    for (name, load) in [
        ("dc_motor_only", LoadProfile::dc_motor_only(&scenario.params)),
        ("full_actuation", LoadProfile::full_actuation(&scenario.params)),
    ] {
        let step = gyroegg_core::power::power_step(pack, chain, &load, 1.0)?;
        profiles.push(ProfileRuntime {
            name,
            pack_current_a: step.pack_current_a,
            estimate_min: runtime_estimate(pack, chain, &load)?,
            simulated_min: simulate_runtime(pack, chain, &load, 1.0)?,
        });
    }
    Ok(PowerReport {
        pack_voltage_v: pack.voltage(),
        pack_energy_wh: pack.nominal_energy_wh(),
        profiles,
    })
}

impl fmt::Display for PowerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let min = |m: Option<f64>| m.map_or("unbounded".to_string(), |m| format!("{m:.1}"));
        writeln!(f, "pack_voltage_v {:.2}  pack_energy_wh {:.2}", self.pack_voltage_v, self.pack_energy_wh)?;
        writeln!(f, "profile          pack_current_a  estimate_min  simulated_min")?;
        for (k, p) in self.profiles.iter().enumerate() {
            write!(
                f,
                "{:<16} {:>14.3}  {:>12}  {:>13}",
                p.name,
                p.pack_current_a,
                min(p.estimate_min),
                min(p.simulated_min)
            )?;
            if k + 1 < self.profiles.len() {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}
