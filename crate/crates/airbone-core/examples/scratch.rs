// Scratch diagnostics; removed before release.
use airbone_core::init::{align, estimate_delay, SyncConfig};
use airbone_core::synth::render::render_pair_detailed;
use airbone_core::synth::{synth_utterance, SceneSpec, VocalModel};

fn main() {
    let m = VocalModel::bank(3, 17)[0].clone();
    let clear = synth_utterance(&m, 4.0, 13).unwrap();
    let out = render_pair_detailed(&clear, &m, &SceneSpec::default(), 2).unwrap();
    let bc = out.pair.bc.shifted(100);
    let sync = SyncConfig::default();

    // Per-frame votes, replicating the estimator internals.
    let ac = &out.pair.ac;
    let usable = ac.len().min(bc.len());
    let mp_ac = ac.samples()[..usable].iter().map(|v| v * v).sum::<f64>() / usable as f64;
    let mp_bc = bc.samples()[..usable].iter().map(|v| v * v).sum::<f64>() / usable as f64;
    for k in 0..sync.num_frames {
        let start = k * sync.frame_length;
        let af = &ac.samples()[start..start + sync.frame_length];
        let bf = &bc.samples()[start..start + sync.frame_length];
        let pa = af.iter().map(|v| v * v).sum::<f64>() / af.len() as f64;
        let pb = bf.iter().map(|v| v * v).sum::<f64>() / bf.len() as f64;
        println!(
            "frame {k}: ac_rel {:.3}, bc_rel {:.3}, gated {}",
            pa / mp_ac,
            pb / mp_bc,
            pa < 0.01 * mp_ac || pb < 0.01 * mp_bc
        );
    }
    let d = estimate_delay(ac, &bc, &sync).unwrap();
    println!("estimate on shifted(+100): {d}");
    let (a2, b2) = align(ac, &bc, d).unwrap();
    let d2 = estimate_delay(&a2, &b2, &sync).unwrap();
    println!("after align: {d2}");
    let d0 = estimate_delay(ac, &out.pair.bc, &sync).unwrap();
    println!("estimate on unshifted pair: {d0}");
    // per-frame votes on the unshifted pair
    for k in 0..sync.num_frames {
        let start = k * sync.frame_length;
        let af: Vec<f64> = ac.samples()[start..start + sync.frame_length].to_vec();
        let norm = |x: &[f64]| -> Vec<f64> {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let v = x.iter().map(|q| (q - m) * (q - m)).sum::<f64>() / n;
            x.iter().map(|q| (q - m) / v.sqrt()).collect()
        };
        let a = norm(&af);
        let lo = start.saturating_sub(sync.search_window);
        let hi = (start + sync.frame_length + sync.search_window).min(out.pair.bc.len());
        let b = norm(&out.pair.bc.samples()[lo..hi]);
        let offset = (start - lo) as i64;
        let r = airbone_core::signal::fft::cross_correlation(&a, &b, sync.search_window + offset.unsigned_abs() as usize);
        let max_lag = (r.len() as i64 - 1) / 2;
        let mut best = (0i64, f64::NEG_INFINITY);
        for tau in -(sync.search_window as i64)..=sync.search_window as i64 {
            let val = r[(tau - offset + max_lag) as usize];
            if val > best.1 { best = (tau, val); }
        }
        println!("frame {k}: vote {} (corr {:.1})", best.0, best.1);
    }
}
