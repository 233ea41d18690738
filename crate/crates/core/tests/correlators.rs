use std::time::Instant;

use dlcz_core::correlators::fast::WriteEvaluator;
use dlcz_core::correlators::fields::{FieldBuilder, VacuumRule};
use dlcz_core::correlators::wick::heralded_numerator;
use dlcz_core::correlators::{Heralding, ReadStage};
use dlcz_core::kernels::WriteKernelContext;
use dlcz_core::model::*;
use dlcz_core::quadrature::QuadratureSpec;

fn fig_s1() -> Scenario {
    let e = EnsembleParams::from_unbarred(7.5, 5.0, -TWO_PI * 40e6).unwrap();
    let w = PulseEnvelope::gaussian(TWO_PI * 12.55e6, 15e-9).unwrap();
    let r = PulseEnvelope::gaussian(TWO_PI * 11.75e6, 35e-9).unwrap();
    Scenario::new(e, w, r).unwrap()
}

#[test]
fn generic_numerator_matches_factorized_path() {
    let s = fig_s1();
    let t_emit = 50e-9;
    let t_read = s.read_origin() + 110e-9;
    let clock = Instant::now();
    let builder = FieldBuilder::new(&s, QuadratureSpec::default().with_tol(1e-7)).unwrap();
    let rule = VacuumRule::new(&builder, &s);
    let generic = heralded_numerator(&builder, &rule, t_emit, t_read).unwrap();
    println!("generic {:?} in {:?}", generic.value, clock.elapsed());
    for c in &generic.breakdown {
        println!("  {} {:.6e}", c.label(), c.value);
    }
    let h = Heralding::new(&s).unwrap();
    let ctx = WriteKernelContext::build(&s).unwrap();
    let basis = h.stage().basis().clone();
    let eval = WriteEvaluator::new(
        &ctx,
        &basis,
        s.numerics.write_panels,
        s.numerics.spatial_order,
    );
    let psi = eval.psi(t_emit).unwrap();
    let moment = eval.write_moment(t_emit).unwrap();
    let read = ReadStage::new(h.stage(), &s).unwrap();
    let fast = read.numerator(t_read, &psi, moment, &s);
    println!("fast {fast:e} ratio {}", generic.value.re / fast);
    assert_eq!(generic.group_count(), 12);
    assert_eq!(generic.noise_group_count(), 3);
}
