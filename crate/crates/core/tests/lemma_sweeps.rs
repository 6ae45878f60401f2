use nlslab_core::microlocal::{verify_lemma_decay, CutoffProfile, LemmaRequest};

fn run(r: LemmaRequest) -> nlslab_core::microlocal::LemmaReport {
    let t0 = std::time::Instant::now();
    let rep = verify_lemma_decay(&r, CutoffProfile::default(), 7).unwrap();
    eprintln!("{} {:.1}s pass={}", rep.lemma, t0.elapsed().as_secs_f64(), rep.pass);
    for s in &rep.samples {
        eprintln!("  {} n={} L={} norm={:.3e}", s.label, s.n, s.half_length, s.norm);
    }
    for f in &rep.fits {
        eprintln!("  {} slope={:.3}", f.name, f.fit.slope);
    }
    rep
}

#[test]
fn high_freq_default_sweep_decays_fast() {
    assert!(run(LemmaRequest::high_freq(0.3, 0.3, 0.2)).pass);
}

#[test]
fn low_freq_default_sweep_decays() {
    assert!(run(LemmaRequest::low_freq(0.2, 0.95, 0.45)).pass);
}

#[test]
fn phys_fourier_commutator_scales_inversely() {
    assert!(run(LemmaRequest::phys_fourier_comm()).pass);
}

#[test]
fn separated_cutoffs_nearly_commute() {
    assert!(run(LemmaRequest::approx_comm()).pass);
}
