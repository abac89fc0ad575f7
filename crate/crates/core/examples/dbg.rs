use rotnum_core::jacobi::JacobiModel;
use rotnum_core::rotation::*;
use rotnum_core::sampling::rng_from_seed;
use rotnum_core::symplectic::FieldTag;

fn main() {
    let mut rng = rng_from_seed(61);
    let m = JacobiModel::random(2, 8, FieldTag::Real, &mut rng, true);
    let (lo, hi) = m.absorb_xi().gershgorin_bounds();
    let tracks = sweep(&m, lo, hi, std::f64::consts::PI, None, &SweepControls::default()).unwrap();
    println!("=== accepted grid around [-1.70, -1.60] of full sweep:");
    for (k, e) in tracks.grid.iter().enumerate() {
        if *e > -1.70 && *e < -1.60 {
            println!("E={:.6} theta={:?} total={:.6}", e, tracks.theta[k], tracks.total[k]);
        }
    }
    println!("events in window: {:?}", tracks.events.iter().filter(|ev| ev.energy > -1.7 && ev.energy < -1.6).collect::<Vec<_>>());

    // restricted window
    let tracks2 = sweep(&m, -1.70, -1.60, std::f64::consts::PI, None, &SweepControls::default()).unwrap();
    println!("=== restricted-window events: {:?}", tracks2.events);
}
