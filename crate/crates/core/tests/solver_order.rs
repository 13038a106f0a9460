use axon_core::model::BioParams;
use axon_core::solver::{convergence_study, Manufactured, OrderReport, TimeScheme};

fn study(scheme: TimeScheme, theta: f64) -> OrderReport {
    let case = Manufactured {
        p: BioParams::table1(),
        l0: 1e-6,
        amp: 0.1,
    };
    convergence_study(&case, &[64, 128, 256], 1e-3, 64, &[0.04, 0.02, 0.01, 0.005], scheme, theta, 1.0).unwrap()
}

#[test]
fn crank_nicolson_is_second_order_in_space_and_time() {
    let r = study(TimeScheme::Theta, 0.5);
    println!("{r:?}");
    assert!(r.space_orders.iter().all(|&o| o >= 1.9), "{:?}", r.space_orders);
    let finest = *r.time_orders.last().unwrap();
    assert!((finest - 2.0).abs() <= 0.1, "{:?}", r.time_orders);
}

#[test]
fn bdf2_is_second_order_in_time() {
    let r = study(TimeScheme::Bdf2, 1.0);
    println!("{r:?}");
    let finest = *r.time_orders.last().unwrap();
    assert!((finest - 2.0).abs() <= 0.1, "{:?}", r.time_orders);
}

#[test]
fn backward_euler_is_first_order_in_time() {
    let r = study(TimeScheme::Theta, 1.0);
    println!("{r:?}");
    let finest = *r.time_orders.last().unwrap();
    assert!((finest - 1.0).abs() <= 0.1, "{:?}", r.time_orders);
}
