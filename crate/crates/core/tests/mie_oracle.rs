mod common;

use num_complex::Complex64;
use synthscope::scatterers::mie_coefficients;

#[test]
fn series_oracle_reproduces_high_precision_reference() {
    for (x, m, q) in common::MIE_REFERENCE {
        let (ext, sca) = common::mie_efficiencies(x, Complex64::new(m, 0.0));
        assert!(common::rel(ext, q) < 1e-10, "x={x} m={m}: ext {ext} vs {q}");
        assert!(common::rel(sca, q) < 1e-10, "x={x} m={m}: sca {sca} vs {q}");
    }
}

#[test]
fn coefficients_match_oracle() {
    for (x, m, q) in common::MIE_REFERENCE {
        let c = mie_coefficients(x, Complex64::new(m, 0.0)).unwrap();
        let (ext, sca) = common::mie_efficiencies(x, Complex64::new(m, 0.0));
        assert!(common::rel(c.q_ext(), ext) < 1e-8, "x={x} m={m}");
        assert!(common::rel(c.q_sca(), sca) < 1e-8, "x={x} m={m}");
        assert!(common::rel(c.q_ext(), q) < 1e-8, "x={x} m={m}");
    }
}

#[test]
fn absorbing_spheres_match_oracle() {
    for (x, m) in [(0.5, Complex64::new(1.5, 0.1)), (4.0, Complex64::new(1.33, 0.01)), (12.0, Complex64::new(2.0, 0.5))] {
        let c = mie_coefficients(x, m).unwrap();
        let (ext, sca) = common::mie_efficiencies(x, m);
        assert!(common::rel(c.q_ext(), ext) < 1e-8, "x={x} m={m}: {} vs {ext}", c.q_ext());
        assert!(common::rel(c.q_sca(), sca) < 1e-8, "x={x} m={m}: {} vs {sca}", c.q_sca());
    }
}
