use aoa_core::estimators::{fit_estimator, EstimatorMode, FitConfig};
use aoa_core::synth::presets::stage1_sweep;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sweep = stage1_sweep::<f64>(0.1, 20251019)?;
    let cfg = FitConfig { mode: EstimatorMode::DirectInv, ..Default::default() };
    let model = fit_estimator(&sweep, &[&sweep], &cfg)?;
    let theta = model.predict_s21(28e9, -45.0, 0.0)?;
    println!("training MAE {:.3} deg", model.diagnostics.mae_deg);
    println!("-45 dB at 28 GHz -> {:.2} deg", theta.to_degrees());
    Ok(())
}
