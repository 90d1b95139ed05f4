//! Quick diagnostic over the bundled arm cases: envelope containment, hard
//! IQC prefix positivity for both declared channels, tube margins.

use keepclose::iqclib::hard_iqc_prefixes;
use keepclose::scenarios::arm;
use keepclose::simkit::running_metrics;

fn main() {
    let scen = arm::ArmScenario::load();
    let (xi, _) = scen.multiplier();
    let _ = xi;
    for case in [arm::case_a(), arm::case_b()] {
        let traj = scen.simulate(&case).unwrap();
        let th_max = traj.y.iter().map(|v| v[0].abs()).fold(0.0_f64, f64::max);
        let om_max = traj.x.iter().map(|v| v[0].abs()).fold(0.0_f64, f64::max);
        let sig = scen.channel_signals(&traj, &case);
        let sector = keepclose::iqclib::sector_iqc(
            &nalgebra::DVector::from_vec(vec![0.0]),
            &nalgebra::DVector::from_vec(vec![arm::SECTOR_BETA]),
        )
        .unwrap();
        let norm = keepclose::iqclib::norm_bound_iqc(scen.epsilon_bound, 1, 1).unwrap();
        let pre_d = hard_iqc_prefixes(&sector, &traj.t, &sig.p_delta, &sig.q_delta).unwrap();
        let pre_e = hard_iqc_prefixes(&norm, &traj.t, &sig.p_eps, &sig.q_eps).unwrap();
        let min_d = pre_d.iter().copied().fold(f64::INFINITY, f64::min);
        let min_e = pre_e.iter().copied().fold(f64::INFINITY, f64::min);
        let (rise, _) = running_metrics(&traj.t, &traj.y, &traj.yhat);
        let peak = rise.iter().copied().fold(0.0_f64, f64::max);
        let eps_max = sig.q_eps.iter().map(|v| v[0].abs()).fold(0.0_f64, f64::max);
        println!(
            "{}: theta_max={th_max:.3} omega_max={om_max:.3} minIQC_delta={min_d:.3e} minIQC_eps={min_e:.3e} peak={peak:.4} eps_max={eps_max:.3}",
            case.name
        );
        let amin = pre_e
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        println!(
            "  eps dip at t={:.2}: theta_r={:.3} eps={:.3} r={:.3}",
            traj.t[amin],
            sig.p_eps[amin][0],
            sig.q_eps[amin][0],
            (case.reference)(traj.t[amin])
        );
    }
    // random suite quick pass
    let mut worst = 0.0_f64;
    let mut worst_th: f64 = 0.0;
    for seed in 0..50u64 {
        let case = arm::random_reference(seed);
        let traj = scen.simulate(&case).unwrap();
        let r = keepclose::simkit::empirical_rise(&traj.t, &traj.y, &traj.yhat).unwrap();
        let th = traj.y.iter().map(|v| v[0].abs()).fold(0.0_f64, f64::max);
        worst = worst.max(r);
        worst_th = worst_th.max(th);
    }
    println!("random suite: worst RISE={worst:.4} worst |theta|={worst_th:.3}");
}
