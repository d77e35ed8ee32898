"""Python smoke tests: drive the main operations end to end through the
pybind11 module with a small synthetic cohort."""

import math

import pytest

import adherelm as al


def two_state_config(n=100, seed=4242):
    spec = al.ModelSpec()
    spec.k = 2
    spec.transition_form = al.TransitionForm.LogitHomogeneous

    params = al.LmmParameters()
    params.form = al.TransitionForm.LogitHomogeneous
    params.phi = [[[0.8, 0.1], [0.15, 0.1], [0.05, 0.8]]] * 3
    params.beta = [[0.0]]
    params.gamma = [[[-2.5]], [[-2.5]]]

    config = al.SyntheticCohortConfig()
    config.n_patients = n
    config.seed = seed
    config.spec = spec
    config.true_params = params
    config.survival.baseline_hazard_per_year = 0.18
    config.survival.state_multipliers = [1.8, 0.5]
    config.censor_horizon_days = 4000
    config.user_prob = [1.0, 0.9, 0.7]
    return config


def test_version():
    assert al.__version__


def test_adherence_levels():
    assert al.adherence_level(0.0) == 0
    assert al.adherence_level(0.25) == 1
    assert al.adherence_level(0.8) == 2
    with pytest.raises(ValueError):
        al.adherence_level(1.5)


def test_timeline_overlap_rule():
    first = al.PurchaseEvent()
    first.patient_id = "p"
    first.drug = al.Drug.RAS
    first.dispense_day = 0
    first.coverage_days = 30
    second = al.PurchaseEvent()
    second.patient_id = "p"
    second.drug = al.Drug.RAS
    second.dispense_day = 15
    second.coverage_days = 30
    timeline = al.build_timeline([first, second])
    assert timeline.covered_days_before(360) == 45
    assert al.cumulative_ratio(timeline, 2) == pytest.approx(0.75)


def test_free_parameter_counts():
    spec = al.ModelSpec()
    spec.transition_form = al.TransitionForm.UnrestrictedTimeVarying
    expected = {1: 6, 2: 35, 3: 86, 4: 159, 5: 254}
    for k, g in expected.items():
        spec.k = k
        assert al.count_free_params(spec) == g
    aic, bic = al.information_criteria(-1309948.0, 6, 35842)
    assert aic == pytest.approx(2619908, abs=1)
    assert bic == pytest.approx(2619959, abs=1)


def test_simulation_is_deterministic():
    config = two_state_config()
    a = al.simulate_cohort(config)
    b = al.simulate_cohort(config, threads=4)
    assert [p.followup_days for p in a.data.patients] == [
        p.followup_days for p in b.data.patients
    ]
    assert [p.states for p in a.true_paths] == [p.states for p in b.true_paths]


def test_pipeline_roundtrip():
    config = two_state_config(n=150)
    sim = al.simulate_cohort(config)

    panels = al.build_panels(sim.data.patients, sim.data.purchases)
    for panel, truth in zip(panels, sim.true_panels):
        for drug in (al.Drug.RAS, al.Drug.BB, al.Drug.MRA):
            assert panel.channel(drug).user == truth.channel(drug).user
            if panel.channel(drug).user:
                assert list(panel.channel(drug).levels) == list(truth.channel(drug).levels)

    data = al.build_data_panel(sim.data.patients, panels)
    assert data.n == 150

    options = al.EmOptions()
    options.n_random_starts = 1
    options.seed = 5
    fit = al.em_fit(config.spec, data, options)
    assert fit.converged
    assert all(
        b >= a - 1e-8 for a, b in zip(fit.loglik_trace, fit.loglik_trace[1:])
    ), "EM trace decreased"

    # Decode, classify and cross a minimal survival analysis.
    labels = []
    samples = []
    for i in range(data.n):
        path = al.viterbi_decode(fit.spec, fit.params, data, i).path
        labels.append(al.classify_profile(path))
        patient = sim.data.patients[i]
        if patient.followup_days <= 360:
            continue
        s = al.SurvivalSample()
        s.id = patient.patient_id
        s.time = (patient.followup_days - 360) / 365.25
        s.event = patient.event
        s.group = 0 if sum(path.states) <= 18 else 1
        s.age = patient.age
        s.gender_f = 1.0 if patient.gender == al.Gender.F else 0.0
        s.mcs = sum(patient.mcs) / 12.0
        samples.append(s)

    table = al.profile_table(labels, min_count=2)
    assert table.total == 150
    assert sum(table.counts) == 150

    low = [s for s in samples if s.group == 0]
    high = [s for s in samples if s.group == 1]
    if len(low) >= 10 and len(high) >= 10:
        result = al.logrank_test([low, high])
        assert result.df == 1
        assert 0.0 <= result.p_value <= 1.0
        curve = al.km_estimate(low)
        assert curve.survival_at(0.0) <= 1.0
        tau = min(3.0, curve.max_time)
        assert al.rmst(curve, tau) <= tau


def test_model_document_roundtrip():
    config = two_state_config(n=60)
    sim = al.simulate_cohort(config)
    panels = al.build_panels(sim.data.patients, sim.data.purchases)
    data = al.build_data_panel(sim.data.patients, panels)
    options = al.EmOptions()
    options.n_random_starts = 0
    fit = al.em_fit(config.spec, data, options)
    text = al.model_document(fit)
    assert '"format_version": 1' in text


def test_validation_errors_surface_as_value_errors():
    spec = al.ModelSpec()
    spec.k = 0
    with pytest.raises(ValueError):
        spec.validate()
