//! Closed-form values frozen from `tests/oracles/formula_refs.py` (mpmath, 50 digits).

#![allow(clippy::excessive_precision, clippy::approx_constant)]

use nngp_cert::certificate::{certify, dudley_constant, failure_prob, Region};
use nngp_cert::covering::{covering_bound, dudley_integral, lattice_cardinality, lattice_cover};
use nngp_cert::kernel::psi;

const REL: f64 = 1e-12;

fn close(got: f64, want: f64, what: &str) {
    let err = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
    assert!(err <= REL, "{what}: got {got:e}, want {want:e}, rel err {err:e}");
}

pub fn psi_values() {
    let table = [
        (-0.999999, 3.0010545373725430208e-10),
        (-0.99, 0.00030025573315434225708),
        (-0.9, 0.0095383988446720730138),
        (-0.5, 0.10899778104422935809),
        (-0.1, 0.26990276590263576667),
        (0.0, 0.31830988618379067154),
        (0.3, 0.48274428383548761501),
        (0.7, 0.75009040925327164689),
        (0.99, 0.99030025573315433338),
        (1.0, 1.0),
    ];
    for (t, want) in table {
        close(psi(t).unwrap(), want, &format!("psi({t})"));
    }
}

pub fn dudley_constant_values() {
    let table = [
        (2, 1.4895793836854737667),
        (3, 1.9175516386408153484),
        (10, 3.4331624902099246042),
        (64, 6.3465684038341449046),
        (784, 11.166575388222905779),
        (1024, 11.732877282376304228),
        (4096, 14.82056209722956179),
        (100000, 22.805124672853710589),
    ];
    for (n, want) in table {
        close(dudley_constant(n).unwrap(), want, &format!("a_{n}"));
    }
}

pub fn radius_values() {
    let ball = [
        ((10.0, 0.5, 1.0, 784), 0.048637636321004072235),
        ((3.5, 0.1, 2.0, 64), 0.0029515597823177950647),
        ((36.9, 0.3, 1.5, 4096), 0.054350344392715694143),
        ((1.0, 0.9, 1.0, 2), 0.058265691569837435117),
    ];
    for ((norm2, delta, m, n), want) in ball {
        close(certify(norm2, delta, m, n).unwrap().r_l1, want, &format!("r_l1{:?}", (norm2, delta, m, n)));
    }
    let segment = [
        ((10.0, 0.5, 1.0), 3.0550773517582864469),
        ((3.5, 0.1, 2.0), 0.15396529627095492698),
        ((36.9, 0.3, 1.5), 5.6626078342905756226),
        ((1.0, 0.9, 4.0), 0.25377282011111957415),
    ];
    for ((norm2, delta, m), want) in segment {
        close(certify(norm2, delta, m, 8).unwrap().r_segment, want, &format!("r_seg{:?}", (norm2, delta, m)));
    }
}

pub fn failure_prob_values() {
    let ball = [
        ((0.01, 10.0, 1.0, 784), 0.10190295123821591716),
        ((0.001, 3.5, 2.0, 64), 0.033328007178653261379),
        ((0.05, 36.9, 1.5, 4096), 0.2745126438315147464),
        ((0.2, 10.0, 1.0, 2), 0.29482617865888358239),
    ];
    for ((r, norm2, m, n), want) in ball {
        close(failure_prob(r, norm2, m, n, Region::Ball), want, &format!("ball{:?}", (r, norm2, m, n)));
    }
    let segment = [
        ((1.0, 10.0, 1.0), 0.070735530263064593675),
        ((0.3, 3.5, 2.0), 0.119366207318921497),
        ((2.0, 36.9, 1.5), 0.054723762667700404212),
        ((0.05, 1.0, 4.0), 0.13402521523528029058),
    ];
    for ((r, norm2, m), want) in segment {
        close(failure_prob(r, norm2, m, 8, Region::Segment), want, &format!("segment{:?}", (r, norm2, m)));
    }
}

pub fn covering_bound_values() {
    let table = [
        ((4, 0.75), 40.317473596635941273),
        ((2, 0.5), 25.0),
        ((2, 0.8), 8.7240618613220591757),
        ((16, 0.3), 52952765693967767.875),
        ((16, 0.2), 45949729863572123.899),
        ((100, 0.5), 1600000000.0),
        ((100, 0.05), 1.8983910248606219843e+161),
        ((7, 1.0), 1.0),
    ];
    for ((n, eps), want) in table {
        close(covering_bound(n, eps), want, &format!("N({n}, {eps})"));
    }
}

pub fn lattice_counts() {
    let rows: [&[u128]; 11] = [
        &[5],
        &[7, 25],
        &[9, 41, 129],
        &[11, 61, 231, 681],
        &[13, 85, 377, 1289, 3653],
        &[15, 113, 575, 2241, 7183, 19825],
        &[17, 145, 833, 3649, 13073, 40081, 108545],
        &[19, 181, 1159, 5641, 22363, 75517, 224143, 598417],
        &[21, 221, 1561, 8361, 36365, 134245, 433905, 1256465, 3317445],
        &[23, 265, 2047, 11969, 56695, 227305, 795455, 2485825, 7059735, 18474633],
        &[25, 313, 2625, 16641, 85305, 369305, 1392065, 4673345, 14218905, 39753273, 103274625],
    ];
    for (i, row) in rows.iter().enumerate() {
        let n = i + 2;
        for (j, &want) in row.iter().enumerate() {
            let m = j + 2;
            assert_eq!(lattice_cardinality(n, m), want, "n={n} m={m}");
        }
    }
    // Enumeration agrees where it is cheap.
    assert_eq!(lattice_cover(8, 5).unwrap().len() as u128, 3649);
}

pub fn entropy_integral_values() {
    // Quadrature, so a looser tolerance than the closed forms.
    let table = [
        (2, 1.8651857839268489069),
        (16, 4.3351852653910101587),
        (256, 9.0307199958376631592),
        (4096, 14.896355044008685712),
    ];
    for (n, want) in table {
        let got = dudley_integral(n).unwrap();
        assert!(((got - want) / want).abs() < 1e-8, "n={n}: {got} vs {want}");
    }
}
