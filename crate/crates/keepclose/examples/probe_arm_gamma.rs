use keepclose::certify::{certify_rise, certify_sse, CertifyConfig, SseSearch};
use keepclose::errorsys::{build_error_system, build_extended_routed, controller_error_gain, DeltaRouting};
use keepclose::iqclib::{combine, norm_bound_iqc, sector_iqc};
use keepclose::sysmodels::StateSpace;
use nalgebra::{DMatrix, DVector};

fn main() {
    let plant = StateSpace::new(
        DMatrix::from_row_slice(2, 2, &[-6.0, -9.0, 1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[10.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        DMatrix::zeros(1, 2),
        1,
    )
    .unwrap();
    let err = build_error_system(&plant, &plant).unwrap();
    for (lam_lo, lam_hi, c_eps) in [
        (-9.0, 1.0, 0.2),
        (-9.0, 1.5, 0.2),
        (-9.5, 2.0, 0.2),
        (-9.0, 1.0, 0.25),
        (-4.0, 1.0, 0.2),
        (-9.0, 0.5, 0.2),
    ] {
        let sector = sector_iqc(&DVector::from_vec(vec![0.0]), &DVector::from_vec(vec![0.364])).unwrap();
        let norm = norm_bound_iqc(c_eps, 1, 1).unwrap();
        let blocks = vec![(0, 2), (2, 2)];
        let xi = combine(&[sector, norm]).unwrap();
        let m = xi.m.clone();
        for routing in [DeltaRouting::ErrorOutput, DeltaRouting::Exogenous] {
            let verts: Vec<_> = [lam_lo, lam_hi]
                .iter()
                .map(|&l| {
                    let lam = DMatrix::from_row_slice(1, 1, &[l]);
                    let gain = controller_error_gain(&lam, &plant).unwrap();
                    build_extended_routed(&err, &gain, &xi, routing).unwrap()
                })
                .collect();
            let cfg = CertifyConfig::default();
            match certify_rise(&verts, &m, &blocks, &cfg) {
                Ok(cert) => {
                    let sse = certify_sse(&verts, &m, &blocks, &CertifyConfig{ level_range: (1e-4, 5.0), ..Default::default() }, SseSearch::Direct);
                    println!(
                        "lam [{lam_lo},{lam_hi}] c={c_eps} {routing:?}: gamma*={:.5} pf={} sse={:?}",
                        cert.level,
                        cert.per_factor_lambda,
                        sse.map(|c| (c.level * 1e4).round() / 1e4).ok()
                    );
                }
                Err(e) => println!("lam [{lam_lo},{lam_hi}] c={c_eps} {routing:?}: {e}"),
            }
        }
    }
}
