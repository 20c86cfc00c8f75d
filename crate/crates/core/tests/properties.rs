use std::sync::Arc;

use cpl_core::domain::{MeridianDomain, ProfileFunction};
use cpl_core::exec::Exec;
use cpl_core::field::Field;
use cpl_core::grid::{Extent, MeridianGrid};
use cpl_core::morse::{classify, PointType};
use cpl_core::nonlinearity::{check_hypotheses, Nonlinearity};
use cpl_core::solver::AxisymmetricLaplacian;
use cpl_core::stability::{rayleigh_quotient, smallest_eigenvalue, EigenOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn catalog() -> impl Strategy<Value = Nonlinearity> {
    prop_oneof![
        (0.0f64..3.0).prop_map(|c| Nonlinearity::constant(c).unwrap()),
        (-5.0f64..5.0, 0.0f64..2.0).prop_map(|(l, c)| Nonlinearity::affine(l, c).unwrap()),
        (0.0f64..3.0).prop_map(|l| Nonlinearity::gelfand(l).unwrap()),
        (0.0f64..3.0, 1.0f64..4.0).prop_map(|(l, p)| Nonlinearity::power(l, p).unwrap()),
    ]
}

proptest! {
    #[test]
    fn catalog_meets_hypotheses(nl in catalog(), alpha in 0.0f64..2.0, beta in 0.0f64..2.0) {
        let nl = nl.separable(alpha, beta).unwrap();
        prop_assert!(check_hypotheses(&nl, 200).pass());
    }

    #[test]
    fn derivative_matches_difference(nl in catalog(), r in 0.0f64..1.0, z in -1.0f64..1.0, u in 0.0f64..3.0) {
        let h = 1e-6;
        let fd = (nl.eval(r, z, u + h).unwrap() - nl.eval(r, z, u - h).unwrap()) / (2.0 * h);
        let d = nl.eval_du(r, z, u).unwrap();
        prop_assert!((fd - d).abs() <= 1e-5 * (1.0 + d.abs()));
    }

    #[test]
    fn classification_ignores_rotations(a in -3.0f64..-0.1, b in -3.0f64..-0.1, c in 0.1f64..3.0, angle in 0.0f64..6.3) {
        let (s, co) = angle.sin_cos();
        let q = DMatrix::from_row_slice(3, 3, &[co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![a, b, c]));
        let h = &q * d * q.transpose();
        let (kind, sig, _) = classify(&h, 1e-3);
        prop_assert_eq!(kind, PointType::Saddle);
        prop_assert_eq!((sig.negative, sig.positive), (2, 1));
    }
}

#[test]
fn rayleigh_quotients_bound_the_eigenvalue() {
    let d = MeridianDomain::new(3, ProfileFunction::spheroid(1.0, 0.6).unwrap(), "").unwrap();
    let g = Arc::new(MeridianGrid::build(&d, Extent { r: 1.0, z: 0.6 }, 33, 41, 1.0).unwrap());
    let lap = AxisymmetricLaplacian::new(g.clone(), 3).unwrap();
    let nl = Nonlinearity::affine(2.0, 1.0).unwrap();
    let u = Field::zeros(g.clone(), 3);
    let rep = smallest_eigenvalue(&lap, &nl, &u, &EigenOptions::default()).unwrap();
    let q = rayleigh_quotient(&lap, &nl, &u, &rep.eigenfield, Exec::default()).unwrap();
    assert!((q - rep.lambda1).abs() < 1e-7);
    for k in 1..6 {
        let phi = Field::from_fn(g.clone(), 3, |r, z| (1.0 - r * r - (z / 0.6).powi(2)).max(0.0) * (1.0 + 0.3 * k as f64 * r * z));
        let q = rayleigh_quotient(&lap, &nl, &u, &phi, Exec::default()).unwrap();
        assert!(q >= rep.lambda1 - 1e-9, "{q} < {}", rep.lambda1);
    }
}
