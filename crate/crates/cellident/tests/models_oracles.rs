//! Forward-model oracles: closed-form circuit responses, finite-difference
//! sensitivity checks, steady states and the geometry rebuild contract.

use cellident::models::{
    find_steady_state, integrate, integrate_with_sensitivities, CellModel, EcmConfig, EcmModel,
    ModelConfig, ModelHandle, Protocol, SimOptions, SpmConfig, SpmModel,
};

fn reference_ecm(slots: &[&str]) -> EcmModel {
    EcmModel::new(EcmConfig::reference_cell(), slots).unwrap()
}

fn reference_spm(slots: &[&str]) -> SpmModel {
    SpmModel::new(SpmConfig::reference_cell(), slots).unwrap()
}

#[test]
fn ecm_step_response_matches_closed_form() {
    let cfg = EcmConfig::reference_cell();
    let model = reference_ecm(&[]);
    let current = 2.5;
    let protocol = Protocol::constant_current(0.8, current, 120.0, 1.0);
    let trace = integrate(&model, &[], &protocol, &SimOptions::default()).unwrap();

    let (r0, r1, c1, q) = (
        cfg.series_resistance,
        cfg.rc_pairs[0].resistance,
        cfg.rc_pairs[0].capacitance,
        cfg.capacity_ah,
    );
    for (&t, &v) in trace.times.iter().zip(&trace.outputs) {
        let soc = 0.8 - current * t / (3600.0 * q);
        let expected =
            cfg.ocv.eval(soc) - current * r0 - current * r1 * (1.0 - (-t / (r1 * c1)).exp());
        assert!(
            (v - expected).abs() < 1e-6,
            "t = {t}: v = {v:.9}, closed form {expected:.9}"
        );
    }
}

#[test]
fn ecm_coulomb_counting_over_two_segments() {
    let model = reference_ecm(&[]);
    let q = EcmConfig::reference_cell().capacity_ah;
    let protocol = Protocol {
        initial_soc: 0.9,
        segments: vec![
            cellident::models::Segment { current: 3.0, duration: 1000.0 },
            cellident::models::Segment { current: -1.5, duration: 500.0 },
        ],
        t_eval: vec![0.0, 1500.0],
        voltage_cutoff: None,
    };
    let mut opts = SimOptions::default();
    opts.record_states = true;
    let trace = integrate(&model, &[], &protocol, &opts).unwrap();
    let states = trace.states.unwrap();
    let delta_soc = states.last().unwrap()[0] - states[0][0];
    let integral_i = 3.0 * 1000.0 - 1.5 * 500.0;
    let rel = (delta_soc * q * 3600.0 + integral_i).abs() / integral_i.abs();
    assert!(rel < 1e-6, "coulomb counting off by {rel:.2e}");
}

#[test]
fn ecm_output_sensitivity_to_series_resistance_is_minus_current() {
    let model = reference_ecm(&["r0"]);
    let current = 3.0;
    let protocol = Protocol::constant_current(0.7, current, 60.0, 20.0);
    let trace =
        integrate_with_sensitivities(&model, &[0.01], &protocol, &SimOptions::default()).unwrap();
    for sens in trace.output_sens.unwrap() {
        assert!((sens[0] + current).abs() < 1e-12, "dy/dR0 = {}", sens[0]);
    }
}

/// Options tight enough that solver error does not pollute the finite
/// difference: differencing amplifies it by 1/(2h).
fn oracle_opts(rtol: f64, atol: f64) -> SimOptions {
    let mut opts = SimOptions::default();
    opts.solver.rtol = rtol;
    opts.solver.atol = atol;
    opts
}

/// Central finite difference of the full simulation with respect to θ.
fn fd_output_sensitivity(
    model: &dyn CellModel,
    theta: &[f64],
    j: usize,
    protocol: &Protocol,
    rel_step: f64,
    opts: &SimOptions,
) -> Vec<f64> {
    let mut run = |th: &[f64]| integrate(model, th, protocol, opts).unwrap().outputs;
    let h = rel_step * theta[j].abs();
    let mut tp = theta.to_vec();
    tp[j] = theta[j] + h;
    let yp = run(&tp);
    tp[j] = theta[j] - h;
    let ym = run(&tp);
    yp.iter().zip(&ym).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Pointwise relative comparison with a floor at 0.1% of the component's
/// peak magnitude, below which a finite-difference oracle is pure noise.
fn assert_sensitivity_close(slot: &str, times: &[f64], forward: &[f64], fd: &[f64], tol: f64) {
    let peak = fd.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    for i in 0..fd.len() {
        let scale = fd[i].abs().max(1e-3 * peak);
        let rel = (forward[i] - fd[i]).abs() / scale;
        assert!(
            rel < tol,
            "slot {slot} at t = {}: forward {:.9e}, fd {:.9e} (rel {rel:.2e})",
            times[i],
            forward[i],
            fd[i]
        );
    }
}

#[test]
fn ecm_sensitivities_match_finite_differences() {
    let slots = ["r0", "r1", "c1", "q"];
    let model = reference_ecm(&slots);
    let theta = [0.012, 0.025, 900.0, 4.8];
    // Five sample instants spread over discharge and relaxation.
    let protocol = Protocol {
        initial_soc: 0.85,
        segments: vec![
            cellident::models::Segment { current: 4.0, duration: 600.0 },
            cellident::models::Segment { current: 0.0, duration: 300.0 },
        ],
        t_eval: vec![45.0, 210.0, 555.0, 660.0, 885.0],
        voltage_cutoff: None,
    };
    let opts = oracle_opts(1e-12, 1e-14);
    let trace = integrate_with_sensitivities(&model, &theta, &protocol, &opts).unwrap();
    let sens = trace.output_sens.unwrap();
    for j in 0..slots.len() {
        let fd = fd_output_sensitivity(&model, &theta, j, &protocol, 1e-4, &opts);
        let forward: Vec<f64> = sens.iter().map(|s| s[j]).collect();
        assert_sensitivity_close(slots[j], &trace.times, &forward, &fd, 1e-6);
    }
}

#[test]
fn spm_sensitivity_to_contact_resistance_is_minus_current() {
    let model = reference_spm(&["contact_resistance"]);
    let current = model.capacity_ah(&[0.01]);
    let protocol = Protocol::constant_current(0.9, current, 300.0, 100.0);
    let trace =
        integrate_with_sensitivities(&model, &[0.01], &protocol, &SimOptions::default()).unwrap();
    for sens in trace.output_sens.unwrap() {
        let rel = (sens[0] + current).abs() / current;
        assert!(rel < 1e-7, "dy/dRc = {}", sens[0]);
    }
}

#[test]
fn spm_sensitivities_match_finite_differences() {
    let slots = ["negative_particle_diffusivity", "contact_resistance"];
    let model = reference_spm(&slots);
    let theta = [3.3e-14, 0.010];
    let current = model.capacity_ah(&theta);
    let protocol = Protocol {
        initial_soc: 1.0,
        segments: vec![
            cellident::models::Segment { current, duration: 3600.0 },
            cellident::models::Segment { current: 0.0, duration: 1800.0 },
        ],
        // Five spread instants, including one in the relaxation phase.
        t_eval: vec![500.0, 1500.0, 2600.0, 3400.0, 4500.0],
        voltage_cutoff: None,
    };
    let opts = oracle_opts(1e-11, 1e-13);
    let trace = integrate_with_sensitivities(&model, &theta, &protocol, &opts).unwrap();
    let sens = trace.output_sens.unwrap();
    for j in 0..slots.len() {
        let fd = fd_output_sensitivity(&model, &theta, j, &protocol, 1e-3, &opts);
        let forward: Vec<f64> = sens.iter().map(|s| s[j]).collect();
        assert_sensitivity_close(slots[j], &trace.times, &forward, &fd, 1e-4);
    }
}

#[test]
fn sensitivities_rejected_for_geometric_slots() {
    let model = reference_spm(&["positive_electrode_thickness"]);
    let protocol = Protocol::constant_current(0.9, 1.0, 10.0, 5.0);
    let err = integrate_with_sensitivities(&model, &[75e-6], &protocol, &SimOptions::default())
        .unwrap_err();
    assert!(err.to_string().contains("positive_electrode_thickness"));
}

#[test]
fn steady_states_have_tiny_residuals() {
    let ecm = reference_ecm(&[]);
    let x = find_steady_state(&ecm, &[], 0.05).unwrap();
    assert_eq!(x[0], 0.05);
    assert!(x[1].abs() < 1e-12);
    let mut f = vec![0.0; ecm.dim()];
    ecm.rhs(0.0, &x, &[], 0.0, &mut f);
    assert!(f.iter().all(|v| v.abs() < 1e-10));

    let spm = reference_spm(&[]);
    let x = find_steady_state(&spm, &[], 0.05).unwrap();
    let cfg = spm.config();
    let expected_neg = (cfg.negative.stoich_at_soc0
        + 0.05 * (cfg.negative.stoich_at_soc1 - cfg.negative.stoich_at_soc0))
        * cfg.negative.max_concentration;
    for &c in &x[..cfg.shells] {
        assert!((c - expected_neg).abs() < 1e-9);
    }
    let mut f = vec![0.0; spm.dim()];
    spm.rhs(0.0, &x, &[], 0.0, &mut f);
    assert!(f.iter().all(|v| v.abs() < 1e-10), "residual {:?}", f);
}

#[test]
fn geometry_cache_rebuilds_only_on_geometric_change() {
    let handle = ModelHandle::new(
        ModelConfig::Spm(SpmConfig::reference_cell()),
        vec![
            "negative_particle_diffusivity".into(),
            "positive_electrode_thickness".into(),
        ],
    )
    .unwrap();

    let _ = handle.system_for(&[3.3e-14, 75e-6]).unwrap();
    assert_eq!(handle.rebuild_count(), 1);

    // Same θ again: cached.
    let _ = handle.system_for(&[3.3e-14, 75e-6]).unwrap();
    assert_eq!(handle.rebuild_count(), 1);

    // Only the diffusivity changes: still cached.
    let _ = handle.system_for(&[5.0e-14, 75e-6]).unwrap();
    assert_eq!(handle.rebuild_count(), 1);

    // The thickness changes: re-discretised.
    let _ = handle.system_for(&[5.0e-14, 80e-6]).unwrap();
    assert_eq!(handle.rebuild_count(), 2);
}

#[test]
fn traces_are_bit_identical_across_runs() {
    let model = reference_spm(&["negative_particle_diffusivity"]);
    let current = model.capacity_ah(&[3.3e-14]);
    let protocol = Protocol::constant_current(1.0, current, 600.0, 60.0);
    let a = integrate(&model, &[3.3e-14], &protocol, &SimOptions::default()).unwrap();
    let b = integrate(&model, &[3.3e-14], &protocol, &SimOptions::default()).unwrap();
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.times, b.times);
    assert_eq!(a.stats, b.stats);
}
