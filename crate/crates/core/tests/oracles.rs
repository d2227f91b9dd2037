mod common;

use common::oracles;

#[test]
fn loss_worked_examples() {
    for check in oracles::loss_oracles() {
        check.unwrap();
    }
}

#[test]
fn frechet_closed_forms() {
    for check in oracles::frechet_oracles() {
        check.unwrap();
    }
}
