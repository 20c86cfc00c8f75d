use cpl_core::continuation::{run_homotopy, ContinuationOptions};
use cpl_core::domain::{HomotopyFamily, MeridianDomain, Profile, ProfileFunction};
use cpl_core::nonlinearity::Nonlinearity;
use proptest::prelude::*;

fn spindle() -> MeridianDomain {
    MeridianDomain::new(3, ProfileFunction::polynomial(vec![1.0, 0.0, -2.0, 0.0, 1.0]).unwrap(), "").unwrap()
}

proptest! {
    #[test]
    fn members_are_nonincreasing_and_even(t in 0.0f64..=1.0, b in 0.2f64..2.0) {
        let target = MeridianDomain::new(3, ProfileFunction::spheroid(1.3, b).unwrap(), "").unwrap();
        let fam = HomotopyFamily::new(target);
        let d = fam.at(t);
        let rs: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0 * fam.max_extent()).collect();
        for w in rs.windows(2) {
            prop_assert!(d.height(w[1]) <= d.height(w[0]) + 1e-14);
        }
        prop_assert!((d.axis_height() - b).abs() < 1e-12);
        for &r in &rs {
            let z = 0.5 * d.height(r);
            prop_assert_eq!(d.inside(r, z), d.inside(r, -z));
        }
    }
}

#[test]
fn endpoints_are_ball_and_target() {
    let fam = HomotopyFamily::new(spindle());
    for k in 0..50 {
        let r = k as f64 / 50.0;
        assert!((fam.profile_at_t(r, 0.0) - (1.0 - r * r).sqrt()).abs() < 1e-14);
        assert!((fam.profile_at_t(r, 1.0) - (1.0 - r * r).powi(2)).abs() < 1e-12);
    }
}

#[test]
fn rerun_reproduces_the_record() {
    let nl = Nonlinearity::gelfand(0.5).unwrap();
    let opts = ContinuationOptions { nr: 33, nz: 65, t_step0: 0.1, ..ContinuationOptions::default() };
    let a = run_homotopy(&spindle(), &nl, &opts).unwrap();
    let b = run_homotopy(&spindle(), &nl, &opts).unwrap();
    assert!(a.completed && a.first_failure_t.is_none());
    assert!(a.steps.iter().all(|s| s.cp_count == 1 && s.lambda1 > 0.0));
    assert_eq!(a.to_csv_without_runtime(), b.to_csv_without_runtime());
}

#[test]
fn fields_are_dumped_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let nl = Nonlinearity::constant(1.0).unwrap();
    let opts = ContinuationOptions {
        nr: 33,
        nz: 65,
        t_step0: 0.1,
        field_dir: Some(dir.path().join("fields")),
        ..ContinuationOptions::default()
    };
    let rec = run_homotopy(&spindle(), &nl, &opts).unwrap();
    let files = std::fs::read_dir(dir.path().join("fields")).unwrap().count();
    assert_eq!(files, rec.steps.len());
}
