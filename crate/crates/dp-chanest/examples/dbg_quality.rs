use dp_chanest::channel::*;
use dp_chanest::cpd::*;
use dp_chanest::harness::{match_angles, nmse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let g = ArrayGeometry::new(2, 4, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    for t in 0..60 {
        let k = 1 + (t % 6);
        let params = sample_params(&mut rng, k, 10.0).unwrap();
        let h = assemble_channel(&params, &g);
        let pilots = generate_pilots(&g, 2 * g.m_t()).unwrap();
        let x = simulate_rx(&h, &pilots, 20.0, &mut rng);
        let h_ls = ls_estimate(&x, &pilots).unwrap();
        let s: u64 = rng.random();
        let opts = CpdOptions { max_iters: 300, tol: 1e-8, restarts: 6, rng_seed: s };
        let ep = estimate_channel_parafac(&h_ls, &g, k, &opts).unwrap();
        let e_truth = nmse(&ep.h_hat, &h).unwrap();
        if e_truth > 2e-2 {
            let e_data = nmse(&ep.h_hat, &h_ls).unwrap();
            let rep = match_angles(&params, &ep).unwrap();
            println!(
                "t={t} k={k}: nmse {:.2e} (vs data {:.2e}, als resid {:.2e}, drop {}, conv {})",
                e_truth, e_data, ep.diagnostics.residual,
                ep.diagnostics.placeholder_paths, ep.diagnostics.converged
            );
            println!("  theta err {:.2e} phi err {:.2e} vt err {:.2e}", rep.theta_rmse, rep.phi_rmse, rep.vartheta_rmse);
            println!("  true theta {:?}", params.theta.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("  est  theta {:?}", ep.theta.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("  true phi   {:?}", params.phi.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("  est  phi   {:?}", ep.phi.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("  true vt    {:?}", params.vartheta.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("  est  vt    {:?}", ep.vartheta.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("  |b| true   {:?}", (0..k).map(|p| ((0..4).map(|r| params.b[[r,p]].norm_sqr()).sum::<f64>().sqrt()*100.0).round()/100.0).collect::<Vec<_>>());
        }
    }
}
