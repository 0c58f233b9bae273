//! RF link-budget math.
//!
//! Everything here is a pure function of its arguments. Power levels travel as
//! [`PowerDbm`] / [`PowerMw`] newtypes; gains and ratios are plain scalars in
//! dB unless the name says `linear`.
//!
//! Units:
//! - power: dBm, mW (and dBW, W where noted)
//! - distance and antenna height: meters
//! - frequency and bandwidth: Hz
//! - noise density: W/Hz

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

pub use special::{erfc, erfc_inv};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Standard noise reference temperature, K.
pub const REFERENCE_TEMP_K: f64 = 290.0;
/// Thermal noise density at 290 K referred to 1 mW, dBm/Hz (rounded form).
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkBudgetError {
    #[error("{param} must be finite (got {value})")]
    NonFinite { param: &'static str, value: f64 },
    #[error("{param} must be positive (got {value})")]
    NonPositive { param: &'static str, value: f64 },
    #[error("{param} out of range: {value} (expected {expected})")]
    OutOfRange {
        param: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("no coverage: {tx_dbm} dBm cannot reach the {threshold_dbm} dBm threshold at any distance")]
    NoCoverage { tx_dbm: f64, threshold_dbm: f64 },
}

pub type Result<T> = std::result::Result<T, LinkBudgetError>;

fn finite<T: Real>(param: &'static str, v: T) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LinkBudgetError::NonFinite { param, value: v.as_f64() })
    }
}

fn positive<T: Real>(param: &'static str, v: T) -> Result<T> {
    let v = finite(param, v)?;
    if v > T::zero() {
        Ok(v)
    } else {
        Err(LinkBudgetError::NonPositive { param, value: v.as_f64() })
    }
}

/// Absolute power in dBm.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerDbm<T>(pub T);

/// Absolute power in milliwatts.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerMw<T>(pub T);

impl<T: Real> PowerDbm<T> {
    pub fn to_mw(self) -> Result<PowerMw<T>> {
        dbm_to_mw(self)
    }
}

impl<T: Real> PowerMw<T> {
    pub fn to_dbm(self) -> Result<PowerDbm<T>> {
        mw_to_dbm(self)
    }
}

/// Propagation model used to turn distance into received power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathlossModel {
    TwoRay,
    FreeSpace,
}

impl PathlossModel {
    pub fn name(self) -> &'static str {
        match self {
            PathlossModel::TwoRay => "TWO-RAY",
            PathlossModel::FreeSpace => "FREE-SPACE",
        }
    }
}

/// Physical-layer parameters of one radio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioParams<T> {
    pub tx_power: PowerDbm<T>,
    pub antenna_height_tx: T,
    pub antenna_height_rx: T,
    /// dB; converted to a linear factor where applied.
    pub antenna_gain_tx: T,
    /// dB; converted to a linear factor where applied.
    pub antenna_gain_rx: T,
    pub frequency: T,
    /// Receiver noise figure F, dB.
    pub noise_figure: T,
    /// Receiver noise bandwidth B, Hz.
    pub noise_bandwidth: T,
    pub rx_threshold: PowerDbm<T>,
    pub propagation_limit: PowerDbm<T>,
    pub reference_temp: T,
    pub boltzmann: T,
}

impl<T: Real> Default for RadioParams<T> {
    /// 15 dBm, 1.5 m antennas, unity gains, 2.4 GHz, F = 10 dB, B = 2 MHz,
    /// -81 dBm RX threshold, -111 dBm propagation limit.
    fn default() -> Self {
        RadioParams {
            tx_power: PowerDbm(T::lit(15.0)),
            antenna_height_tx: T::lit(1.5),
            antenna_height_rx: T::lit(1.5),
            antenna_gain_tx: T::zero(),
            antenna_gain_rx: T::zero(),
            frequency: T::lit(2.4e9),
            noise_figure: T::lit(10.0),
            noise_bandwidth: T::lit(2.0e6),
            rx_threshold: PowerDbm(T::lit(-81.0)),
            propagation_limit: PowerDbm(T::lit(-111.0)),
            reference_temp: T::lit(REFERENCE_TEMP_K),
            boltzmann: T::lit(BOLTZMANN),
        }
    }
}

impl<T: Real> RadioParams<T> {
    pub fn with_tx_power(mut self, dbm: T) -> Self {
        self.tx_power = PowerDbm(dbm);
        self
    }

    pub fn with_rx_threshold(mut self, dbm: T) -> Self {
        self.rx_threshold = PowerDbm(dbm);
        self
    }

    pub fn validate(&self) -> Result<()> {
        finite("tx_power", self.tx_power.0)?;
        positive("antenna_height_tx", self.antenna_height_tx)?;
        positive("antenna_height_rx", self.antenna_height_rx)?;
        finite("antenna_gain_tx", self.antenna_gain_tx)?;
        finite("antenna_gain_rx", self.antenna_gain_rx)?;
        positive("frequency", self.frequency)?;
        finite("noise_figure", self.noise_figure)?;
        positive("noise_bandwidth", self.noise_bandwidth)?;
        finite("rx_threshold", self.rx_threshold.0)?;
        finite("propagation_limit", self.propagation_limit.0)?;
        positive("reference_temp", self.reference_temp)?;
        positive("boltzmann", self.boltzmann)?;
        if self.rx_threshold.0 < self.propagation_limit.0 {
            return Err(LinkBudgetError::OutOfRange {
                param: "rx_threshold",
                value: self.rx_threshold.0.as_f64(),
                expected: ">= propagation_limit",
            });
        }
        Ok(())
    }

    /// Product of the linear antenna gains, G_t * G_r.
    pub fn antenna_gain_product(&self) -> T {
        db_to_linear(self.antenna_gain_tx + self.antenna_gain_rx)
    }

    pub fn wavelength(&self) -> T {
        T::lit(SPEED_OF_LIGHT) / self.frequency
    }

    /// Receiver thermal noise floor, -174 + 10 log10(B) + F, in dBm.
    pub fn noise_floor(&self) -> PowerDbm<T> {
        PowerDbm(T::lit(THERMAL_NOISE_DBM_HZ) + T::lit(10.0) * self.noise_bandwidth.log10() + self.noise_figure)
    }

    /// Noise power spectral density k * T0 * F, W/Hz.
    pub fn noise_density(&self) -> T {
        self.boltzmann * self.reference_temp * db_to_linear(self.noise_figure)
    }
}

/// Channel state of one link: A = K / L.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkState<T> {
    pub attenuation_factor: T,
    pub antenna_gain_product: T,
    pub channel_loss: T,
    pub distance: T,
}

impl<T: Real> LinkState<T> {
    pub fn new(antenna_gain_product: T, channel_loss: T, distance: T) -> Result<Self> {
        positive("antenna_gain_product", antenna_gain_product)?;
        positive("channel_loss", channel_loss)?;
        positive("distance", distance)?;
        Ok(LinkState {
            attenuation_factor: antenna_gain_product / channel_loss,
            antenna_gain_product,
            channel_loss,
            distance,
        })
    }

    /// Link described by the two-ray ground model: L = d^4 / (h_t^2 h_r^2).
    pub fn two_ray(params: &RadioParams<T>, distance: T) -> Result<Self> {
        positive("distance", distance)?;
        let h = params.antenna_height_tx * params.antenna_height_rx;
        let loss = distance.powi(4) / (h * h);
        Self::new(params.antenna_gain_product(), loss, distance)
    }
}

/// Modulation and rate quantities of a link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationParams<T> {
    pub bits_per_symbol: u32,
    pub data_rate: T,
    pub symbol_rate: T,
    pub noise_density: T,
    /// E_b = P_S * T_b; zero until a signal power is attached.
    pub energy_per_bit: T,
    pub bit_time: T,
}

impl<T: Real> ModulationParams<T> {
    pub fn new(bits_per_symbol: u32, data_rate: T, noise_density: T) -> Result<Self> {
        if bits_per_symbol == 0 {
            return Err(LinkBudgetError::NonPositive { param: "bits_per_symbol", value: 0.0 });
        }
        positive("data_rate", data_rate)?;
        positive("noise_density", noise_density)?;
        let b = T::from_u32(bits_per_symbol).unwrap();
        Ok(ModulationParams {
            bits_per_symbol,
            data_rate,
            symbol_rate: data_rate / b,
            noise_density,
            energy_per_bit: T::zero(),
            bit_time: data_rate.recip(),
        })
    }

    /// QPSK (2 bits/symbol).
    pub fn qpsk(data_rate: T, noise_density: T) -> Result<Self> {
        Self::new(2, data_rate, noise_density)
    }

    /// Overrides the symbol rate directly (data rate follows).
    pub fn with_symbol_rate(mut self, symbol_rate: T) -> Result<Self> {
        positive("symbol_rate", symbol_rate)?;
        let b = T::from_u32(self.bits_per_symbol).unwrap();
        self.symbol_rate = symbol_rate;
        self.data_rate = symbol_rate * b;
        self.bit_time = self.data_rate.recip();
        Ok(self)
    }

    /// Attaches a signal power in watts, filling in E_b.
    pub fn with_signal_power(mut self, watts: T) -> Self {
        self.energy_per_bit = watts * self.bit_time;
        self
    }

    /// Receiver SNR implied by an E_b/N_0: SNR = (E_b/N_0) * b.
    pub fn snr_from_ebn0(&self, ebn0: T) -> T {
        ebn0 * T::from_u32(self.bits_per_symbol).unwrap()
    }
}

#[inline]
pub fn db_to_linear<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

#[inline]
pub fn linear_to_db<T: Real>(ratio: T) -> T {
    T::lit(10.0) * ratio.log10()
}

pub fn dbm_to_mw<T: Real>(p: PowerDbm<T>) -> Result<PowerMw<T>> {
    let v = finite("power_dbm", p.0)?;
    Ok(PowerMw(db_to_linear(v)))
}

pub fn mw_to_dbm<T: Real>(p: PowerMw<T>) -> Result<PowerDbm<T>> {
    let v = positive("power_mw", p.0)?;
    Ok(PowerDbm(linear_to_db(v)))
}

pub fn dbw_to_w<T: Real>(dbw: T) -> Result<T> {
    Ok(db_to_linear(finite("power_dbw", dbw)?))
}

pub fn w_to_dbw<T: Real>(w: T) -> Result<T> {
    Ok(linear_to_db(positive("power_w", w)?))
}

/// Gain in dB between two power levels, 10 log10(p_out / p_in).
pub fn decibel_gain<T: Real>(p_out: PowerMw<T>, p_in: PowerMw<T>) -> Result<T> {
    let out = positive("p_out", p_out.0)?;
    let inp = positive("p_in", p_in.0)?;
    Ok(linear_to_db(out / inp))
}

/// Two-ray ground reflection: P_r = P_t h_t^2 h_r^2 G_t G_r / d^4, all in mW.
pub fn two_ray_rx_power<T: Real>(params: &RadioParams<T>, distance: T) -> Result<PowerMw<T>> {
    let d = positive("distance", distance)?;
    let pt = dbm_to_mw(params.tx_power)?.0;
    let h = params.antenna_height_tx * params.antenna_height_rx;
    Ok(PowerMw(pt * h * h * params.antenna_gain_product() / d.powi(4)))
}

/// Friis free-space model: P_r = P_t G_t G_r lambda^2 / (4 pi d)^2.
pub fn free_space_rx_power<T: Real>(params: &RadioParams<T>, distance: T) -> Result<PowerMw<T>> {
    let d = positive("distance", distance)?;
    positive("frequency", params.frequency)?;
    let pt = dbm_to_mw(params.tx_power)?.0;
    let lambda = params.wavelength();
    let denom = T::lit(4.0) * T::PI() * d;
    Ok(PowerMw(pt * params.antenna_gain_product() * lambda * lambda / (denom * denom)))
}

pub fn rx_power<T: Real>(params: &RadioParams<T>, model: PathlossModel, distance: T) -> Result<PowerMw<T>> {
    match model {
        PathlossModel::TwoRay => two_ray_rx_power(params, distance),
        PathlossModel::FreeSpace => free_space_rx_power(params, distance),
    }
}

/// Free-space path loss 20 log10(4 pi d f / c), dB, for unity gains.
pub fn free_space_path_loss_db<T: Real>(frequency: T, distance: T) -> Result<T> {
    let d = positive("distance", distance)?;
    let f = positive("frequency", frequency)?;
    Ok(T::lit(20.0) * (T::lit(4.0) * T::PI() * d * f / T::lit(SPEED_OF_LIGHT)).log10())
}

/// Distance at which the received power falls to the RX threshold.
///
/// Closed form: fourth root for two-ray, square root for free space.
pub fn max_range<T: Real>(params: &RadioParams<T>, model: PathlossModel) -> Result<T> {
    let pt = dbm_to_mw(params.tx_power)?.0;
    let pr = dbm_to_mw(params.rx_threshold)?.0;
    let gains = params.antenna_gain_product();
    let range = match model {
        PathlossModel::TwoRay => {
            let h = params.antenna_height_tx * params.antenna_height_rx;
            (pt * h * h * gains / pr).sqrt().sqrt()
        }
        PathlossModel::FreeSpace => {
            let lambda = params.wavelength();
            (pt * gains / pr).sqrt() * lambda / (T::lit(4.0) * T::PI())
        }
    };
    if range.is_finite() && range > T::zero() {
        Ok(range)
    } else {
        Err(LinkBudgetError::NoCoverage {
            tx_dbm: params.tx_power.0.as_f64(),
            threshold_dbm: params.rx_threshold.0.as_f64(),
        })
    }
}

/// Two-ray range from explicit mW quantities: d = (P_t h_t^2 h_r^2 / P_r)^(1/4).
pub fn two_ray_range_mw<T: Real>(pt_mw: T, pr_mw: T, height_tx: T, height_rx: T) -> Result<T> {
    let pt = positive("pt_mw", pt_mw)?;
    let pr = positive("pr_mw", pr_mw)?;
    let h = positive("height_tx", height_tx)? * positive("height_rx", height_rx)?;
    Ok((pt * h * h / pr).sqrt().sqrt())
}

/// QPSK bit error rate, 0.5 * erfc(sqrt(Eb/N0)).
pub fn qpsk_ber<T: Real>(ebn0: T) -> Result<T> {
    let v = finite("ebn0", ebn0)?;
    if v < T::zero() {
        return Err(LinkBudgetError::OutOfRange {
            param: "ebn0",
            value: v.as_f64(),
            expected: ">= 0",
        });
    }
    Ok(T::lit(0.5) * erfc(v.sqrt()))
}

/// Eb/N0 (linear) that yields `ber` under QPSK: [erfc^-1(2 BER)]^2.
pub fn required_ebn0<T: Real>(ber: T) -> Result<T> {
    let v = finite("ber", ber)?;
    if !(v > T::zero() && v <= T::lit(0.5)) {
        return Err(LinkBudgetError::OutOfRange {
            param: "ber",
            value: v.as_f64(),
            expected: "(0, 0.5]",
        });
    }
    let x = erfc_inv(T::lit(2.0) * v);
    Ok(x * x)
}

/// Minimum transmit power (W) meeting a BER target:
/// P_S = R_S * b * (N_0 / A) * [erfc^-1(2 BER)]^2.
pub fn optimal_tx_power<T: Real>(modulation: &ModulationParams<T>, link: &LinkState<T>, ber_target: T) -> Result<T> {
    positive("symbol_rate", modulation.symbol_rate)?;
    positive("noise_density", modulation.noise_density)?;
    let a = finite("attenuation_factor", link.attenuation_factor)?;
    if a <= T::zero() {
        return Err(LinkBudgetError::NonPositive {
            param: "attenuation_factor",
            value: a.as_f64(),
        });
    }
    let ebn0 = required_ebn0(ber_target)?;
    let b = T::from_u32(modulation.bits_per_symbol).unwrap();
    Ok(modulation.symbol_rate * b * (modulation.noise_density / a) * ebn0)
}

/// Minimum detectable signal, -174 + 10 log10(B) + F + SNR_min, dBm.
pub fn minimum_detectable_signal<T: Real>(params: &RadioParams<T>, snr_min_db: T) -> Result<PowerDbm<T>> {
    positive("noise_bandwidth", params.noise_bandwidth)?;
    finite("snr_min_db", snr_min_db)?;
    Ok(PowerDbm(params.noise_floor().0 + snr_min_db))
}

/// Linear form of the minimum detectable signal, k T0 F B (S/N)min, in dBm.
pub fn minimum_detectable_signal_linear<T: Real>(params: &RadioParams<T>, snr_min_db: T) -> Result<PowerDbm<T>> {
    let b = positive("noise_bandwidth", params.noise_bandwidth)?;
    finite("snr_min_db", snr_min_db)?;
    let watts = params.noise_density() * b * db_to_linear(snr_min_db);
    mw_to_dbm(PowerMw(watts * T::lit(1e3)))
}

/// Receiver dynamic range MAS / MDS, expressed in dB.
pub fn receiver_dynamic_range<T: Real>(mas: PowerDbm<T>, mds: PowerDbm<T>) -> Result<T> {
    let hi = finite("mas", mas.0)?;
    let lo = finite("mds", mds.0)?;
    if hi < lo {
        return Err(LinkBudgetError::OutOfRange {
            param: "mas",
            value: hi.as_f64(),
            expected: ">= mds",
        });
    }
    Ok(hi - lo)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn radio(tx: f64) -> RadioParams<f64> {
        RadioParams::default().with_tx_power(tx)
    }

    #[test]
    fn dbm_mw_examples() {
        assert_eq!(dbm_to_mw(PowerDbm(0.0)).unwrap().0, 1.0);
        assert_relative_eq!(dbm_to_mw(PowerDbm(15.0)).unwrap().0, 31.6227, epsilon = 1e-4);
        assert_relative_eq!(dbm_to_mw(PowerDbm(-81.0)).unwrap().0, 7.943_282e-9, max_relative = 1e-6);
        assert_eq!(mw_to_dbm(PowerMw(1.0)).unwrap().0, 0.0);
        assert_relative_eq!(mw_to_dbm(PowerMw(31.6227)).unwrap().0, 15.0, epsilon = 1e-4);
    }

    #[test]
    fn dbm_conversion_errors() {
        assert!(matches!(dbm_to_mw(PowerDbm(f64::NAN)), Err(LinkBudgetError::NonFinite { .. })));
        assert!(matches!(dbm_to_mw(PowerDbm(f64::INFINITY)), Err(LinkBudgetError::NonFinite { .. })));
        assert!(matches!(mw_to_dbm(PowerMw(0.0)), Err(LinkBudgetError::NonPositive { .. })));
        assert!(matches!(mw_to_dbm(PowerMw(-1.0)), Err(LinkBudgetError::NonPositive { .. })));
    }

    #[test]
    fn dbw_forms() {
        assert_eq!(dbw_to_w(0.0).unwrap(), 1.0);
        assert_relative_eq!(w_to_dbw(0.001).unwrap(), -30.0, epsilon = 1e-12);
    }

    #[test]
    fn decibel_gain_examples() {
        assert_eq!(decibel_gain(PowerMw(1.0), PowerMw(1.0)).unwrap(), 0.0);
        assert_relative_eq!(decibel_gain(PowerMw(100.0), PowerMw(1.0)).unwrap(), 20.0, epsilon = 1e-12);
        assert_relative_eq!(decibel_gain(PowerMw(2.0), PowerMw(1.0)).unwrap(), 3.0103, epsilon = 1e-4);
        assert!(decibel_gain(PowerMw(0.0), PowerMw(1.0)).is_err());
        assert!(decibel_gain(PowerMw(1.0), PowerMw(-2.0)).is_err());
    }

    #[test]
    fn two_ray_examples() {
        let p = RadioParams::default().with_tx_power(mw_to_dbm(PowerMw(31.6227)).unwrap().0);
        let pr = two_ray_rx_power(&p, 388.0).unwrap().0;
        assert_relative_eq!(pr, 7.06e-9, max_relative = 1e-3);
        let pr = two_ray_rx_power(&radio(10.0), 282.547).unwrap().0;
        assert_relative_eq!(pr, 7.943e-9, max_relative = 1e-4);
        assert!(two_ray_rx_power(&radio(15.0), 0.0).is_err());
        assert!(two_ray_rx_power(&radio(15.0), -3.0).is_err());
    }

    #[test]
    fn free_space_examples() {
        assert_relative_eq!(free_space_path_loss_db(2.4e9, 100.0).unwrap(), 80.05, epsilon = 5e-3);
        let pr = free_space_rx_power(&radio(15.0), 100.0).unwrap();
        assert_relative_eq!(pr.to_dbm().unwrap().0, -65.05, epsilon = 5e-3);
        let mut p = radio(15.0);
        p.frequency = 0.0;
        assert!(free_space_rx_power(&p, 100.0).is_err());
        assert!(free_space_rx_power(&radio(15.0), 0.0).is_err());
    }

    #[test]
    fn max_range_examples() {
        assert_relative_eq!(max_range(&radio(15.0), PathlossModel::TwoRay).unwrap(), 376.782, epsilon = 0.01);
        assert_relative_eq!(max_range(&radio(10.0), PathlossModel::TwoRay).unwrap(), 282.547, epsilon = 0.01);
        let d: f64 = two_ray_range_mw(31.6227, 7e-9, 1.5, 1.5).unwrap();
        assert!((d - 388.0).abs() <= 1.0, "{d}");
    }

    #[test]
    fn free_space_range_hits_threshold() {
        let p = radio(15.0);
        let d = max_range(&p, PathlossModel::FreeSpace).unwrap();
        let pr = free_space_rx_power(&p, d).unwrap().0;
        assert_relative_eq!(pr, dbm_to_mw(p.rx_threshold).unwrap().0, max_relative = 1e-9);
    }

    #[test]
    fn no_coverage_when_gain_vanishes() {
        let mut p = radio(15.0);
        p.antenna_gain_tx = -1e6;
        assert!(matches!(
            max_range(&p, PathlossModel::TwoRay),
            Err(LinkBudgetError::NoCoverage { .. })
        ));
    }

    #[test]
    fn qpsk_ber_examples() {
        assert_eq!(qpsk_ber(0.0).unwrap(), 0.5);
        assert_relative_eq!(qpsk_ber(9.0946).unwrap(), 1e-5, max_relative = 0.02);
        assert_relative_eq!(qpsk_ber(1.0).unwrap(), 0.0786, epsilon = 1e-4);
        assert!(qpsk_ber(-0.5).is_err());
    }

    #[test]
    fn required_ebn0_examples() {
        assert_eq!(required_ebn0(0.5).unwrap(), 0.0);
        assert_relative_eq!(required_ebn0(1e-5).unwrap(), 9.0946, epsilon = 1e-4);
        assert!(required_ebn0(0.0).is_err());
        assert!(required_ebn0(0.6).is_err());
        assert!(required_ebn0(f64::NAN).is_err());
    }

    #[test]
    fn optimal_tx_power_examples() {
        let m = ModulationParams::new(2, 2e6, 4.0039e-20).unwrap();
        assert_eq!(m.symbol_rate, 1e6);
        let link = LinkState::new(1.0, 1e10, 100.0).unwrap();
        assert_relative_eq!(link.attenuation_factor, 1e-10);
        let p = optimal_tx_power(&m, &link, 1e-5).unwrap();
        assert_relative_eq!(p, 7.28e-3, max_relative = 2e-3);
        assert_eq!(optimal_tx_power(&m, &link, 0.5).unwrap(), 0.0);

        let doubled = m.with_symbol_rate(2e6).unwrap();
        assert_relative_eq!(optimal_tx_power(&doubled, &link, 1e-5).unwrap(), 2.0 * p, max_relative = 1e-12);

        let mut dead = link;
        dead.attenuation_factor = 0.0;
        assert!(optimal_tx_power(&m, &dead, 1e-5).is_err());
    }

    #[test]
    fn noise_density_matches_kt0f() {
        let p = RadioParams::<f64>::default();
        assert_relative_eq!(p.noise_density(), 4.0039e-20, max_relative = 1e-4);
    }

    #[test]
    fn mds_examples() {
        let mut p = RadioParams::<f64>::default();
        p.noise_bandwidth = 1.0;
        p.noise_figure = 0.0;
        assert_eq!(minimum_detectable_signal(&p, 0.0).unwrap().0, -174.0);
        let p = RadioParams::<f64>::default();
        assert_relative_eq!(minimum_detectable_signal(&p, 10.0).unwrap().0, -90.99, epsilon = 5e-3);
    }

    #[test]
    fn dynamic_range_examples() {
        assert_eq!(receiver_dynamic_range(PowerDbm(-30.0), PowerDbm(-90.0)).unwrap(), 60.0);
        assert_eq!(receiver_dynamic_range(PowerDbm(-50.0), PowerDbm(-50.0)).unwrap(), 0.0);
        assert_eq!(receiver_dynamic_range(PowerDbm(-20.0), PowerDbm(-91.0)).unwrap(), 71.0);
        assert!(receiver_dynamic_range(PowerDbm(-95.0), PowerDbm(-90.0)).is_err());
    }

    #[test]
    fn link_state_two_ray_matches_rx_power() {
        let p = radio(15.0);
        let link = LinkState::two_ray(&p, 250.0).unwrap();
        let pt = dbm_to_mw(p.tx_power).unwrap().0;
        let pr = two_ray_rx_power(&p, 250.0).unwrap().0;
        assert_relative_eq!(pt * link.attenuation_factor, pr, max_relative = 1e-12);
    }

    #[test]
    fn radio_validation() {
        assert!(RadioParams::<f64>::default().validate().is_ok());
        let mut p = RadioParams::<f64>::default();
        p.antenna_height_rx = 0.0;
        assert!(p.validate().is_err());
        let p = RadioParams::<f64>::default().with_rx_threshold(-120.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn f32_instantiation() {
        let p = RadioParams::<f32>::default();
        let d = max_range(&p, PathlossModel::TwoRay).unwrap();
        assert!((d - 376.782).abs() < 0.05, "{d}");
        let e: f32 = required_ebn0(1e-5f32).unwrap();
        assert!((e - 9.0946).abs() < 1e-3);
    }
}
