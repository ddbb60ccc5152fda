# -*- coding: utf-8 -*-
"""dataset_io 单元测试: 序列文件、拟合报告、合成数据集"""

import json
import string

import numpy as np
import pytest

from curve_fitting import fit_acc, rmse_values
from dataset_io import (FitReport, SynthEntry, SynthSpec, default_synth_spec, format_report,
                        format_trace, injection_from_report, params_from_report, parse_trace,
                        read_ground_truth, read_report, read_trace, report_from_fit,
                        report_timestamp, revalidate_report, synth_dataset, write_dataset,
                        write_report, write_trace)
from framework import (AccumulationParams, ChannelDomainError, ChannelParams, DatasetIOError,
                       InjectionParams, IntensityTrace, MixtureParams, TimeGrid, TraceKind,
                       TraceParseError, TraceValidationError)
from signal_model import model_acc, model_dist

INJ = InjectionParams(t_w=3.0, t_0=1.0)
Q_MEAN = ChannelParams(d_eff=5e-6, v_eff=3.5e-3, l_eff=3.4e-2, d_rx=1.7e-2)

GOOD_FILE = ["# version: v1", "# dt: 0.04", "# kind: dist", "sample", "0.0", "0.5", "1.0", ""]


def random_trace(rng):
    n = int(rng.integers(2, 60))
    scale = 10.0 ** rng.integers(-30, 30, size=n)
    samples = rng.standard_normal(n) * scale
    alphabet = list(string.ascii_letters + string.digits)
    extra = {f"x_{''.join(rng.choice(alphabet, 5))}": ''.join(rng.choice(alphabet, 8))
             for _ in range(int(rng.integers(0, 3)))}
    optional = {}
    if rng.random() < 0.5:
        optional.update(egg=str(rng.integers(1, 30)), roi=str(rng.integers(1, 5)),
                        ded=int(rng.integers(8, 16)))
    if rng.random() < 0.5:
        optional.update(d_inj=float(rng.uniform(1e-3, 3e-2)),
                        injection_duration=float(rng.uniform(0.5, 5.0)))
    if rng.random() < 0.3:
        optional.update(t_start=float(rng.uniform(0.0, 100.0)))
    return IntensityTrace(dt=float(rng.uniform(1e-4, 10.0)), samples=samples,
                          kind=list(TraceKind)[int(rng.integers(4))], extra=extra, **optional)


# ==============================================================================
# 序列文件
# ==============================================================================

def test_random_traces_survive_text_format():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        trace = random_trace(rng)
        text = format_trace(trace)
        back = parse_trace(text.split('\n'))
        np.testing.assert_array_equal(back.samples, trace.samples)
        assert back.dt == trace.dt
        assert back.kind is trace.kind
        assert (back.egg, back.roi, back.ded) == (trace.egg, trace.roi, trace.ded)
        assert (back.d_inj, back.injection_duration, back.t_start) == (
            trace.d_inj, trace.injection_duration, trace.t_start)
        assert back.extra == trace.extra
        assert format_trace(back) == text


def test_write_then_read_file_is_byte_stable(tmp_path):
    trace = model_dist(MixtureParams.single(Q_MEAN), INJ, TimeGrid.from_duration(0.1, 30.0))
    trace = trace.with_samples(trace.samples, egg='3', roi='2', ded=12, extra={'lab': 'demo'})
    first = write_trace(trace, tmp_path / "a" / "trace.csv")
    back = read_trace(first)
    second = write_trace(back, tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()
    assert not (tmp_path / "a" / "trace.csv.tmp").exists()
    assert back.extra == {'lab': 'demo'}


def test_header_layout():
    trace = IntensityTrace(dt=0.04, samples=[0.0, 1.0], kind=TraceKind.ACC, ded=9,
                           extra={'zeta': '1', 'alpha': '2'})
    lines = format_trace(trace).split('\n')
    assert lines[:4] == ["# version: v1", "# dt: 0.04", "# kind: acc", "# DED: 9"]
    assert lines[4:7] == ["# alpha: 2", "# zeta: 1", "sample"]
    assert lines[-1] == ""


def test_parse_minimal_file():
    trace = parse_trace(GOOD_FILE)
    assert trace.dt == 0.04
    assert trace.kind is TraceKind.DIST
    np.testing.assert_array_equal(trace.samples, [0.0, 0.5, 1.0])


def test_bad_sample_reports_line_number():
    lines = list(GOOD_FILE)
    lines[5] = "abc"
    with pytest.raises(TraceParseError) as info:
        parse_trace(lines)
    assert info.value.line_no == 6
    assert info.value.field_name == 'sample'
    assert "line 6" in str(info.value)


@pytest.mark.parametrize("edit, line_no, field_name", [
    (lambda ls: ls.__setitem__(1, "# dt: fast"), 2, 'dt'),
    (lambda ls: ls.__setitem__(0, "# version: v9"), 1, 'version'),
    (lambda ls: ls.__setitem__(2, "# kind: weird"), 3, 'kind'),
    (lambda ls: ls.insert(3, "# dt: 0.1"), 4, 'dt'),
    (lambda ls: ls.insert(3, "# no separator"), 4, None),
    (lambda ls: ls.__setitem__(3, "value"), 4, 'sample'),
    (lambda ls: ls.__setitem__(6, "inf"), 7, 'sample'),
    (lambda ls: ls.insert(5, ""), 6, 'sample'),
])
def test_parse_errors(edit, line_no, field_name):
    lines = list(GOOD_FILE)
    edit(lines)
    with pytest.raises(TraceParseError) as info:
        parse_trace(lines)
    assert info.value.line_no == line_no
    assert info.value.field_name == field_name


def test_missing_dt_is_a_parse_error():
    with pytest.raises(TraceParseError) as info:
        parse_trace(["# version: v1", "sample", "0.0", "1.0"])
    assert info.value.field_name == 'dt'


@pytest.mark.parametrize("lines", [
    ["# version: v1", "# dt: 0", "sample", "0.0", "1.0"],
    ["# version: v1", "# dt: -0.1", "sample", "0.0", "1.0"],
    ["# version: v1", "# dt: 0.1", "sample", "0.0"],
])
def test_invalid_trace_content(lines):
    with pytest.raises(TraceValidationError):
        parse_trace(lines)


@pytest.mark.parametrize("trace", [
    IntensityTrace(dt=0.1, samples=[0.0]),
    IntensityTrace(dt=0.1, samples=[0.0, np.nan]),
    IntensityTrace(dt=0.1, samples=[0.0, 1.0], extra={'dt': '3'}),
    IntensityTrace(dt=0.1, samples=[0.0, 1.0], extra={'a:b': '3'}),
    IntensityTrace(dt=0.1, samples=[0.0, 1.0], extra={'note': 'two\nlines'}),
])
def test_write_refuses_invalid_traces(trace, tmp_path):
    with pytest.raises(TraceValidationError):
        write_trace(trace, tmp_path / "bad.csv")
    assert not (tmp_path / "bad.csv").exists()


def test_missing_file_raises_io_error(tmp_path):
    with pytest.raises(DatasetIOError):
        read_trace(tmp_path / "absent.csv")


# ==============================================================================
# 拟合报告
# ==============================================================================

def test_acc_report_file_and_revalidation(tmp_path):
    trace = model_acc(AccumulationParams(a=0.6, b=0.01), TimeGrid(dt=1.0, n=600))
    result = fit_acc(trace, starts=2, seed=4)
    report = report_from_fit(result, 'egg1_roi1')
    path = write_report(report, tmp_path / "egg1_roi1.acc.report.json")
    back = read_report(path)
    assert back == report
    assert format_report(back) == path.read_text(encoding='utf-8')
    assert revalidate_report(back, trace) == pytest.approx(result.rmse, abs=1e-12)
    kind, params = params_from_report(back)
    assert kind == 'acc' and params == result.params


def test_dist_report_revalidates_with_recorded_injection():
    grid = TimeGrid.from_duration(0.1, 40.0)
    mixture = MixtureParams.single(Q_MEAN)
    rng = np.random.default_rng(1)
    clean = model_dist(mixture, INJ, grid)
    trace = clean.with_samples(clean.samples + rng.normal(0.0, 0.01, size=grid.n))
    report = FitReport(
        trace_ref='t', model_kind='dist-1',
        parameters={'components': [{'weight': 1.0, 'd_eff': Q_MEAN.d_eff, 'v_eff': Q_MEAN.v_eff,
                                    'l_eff': Q_MEAN.l_eff, 'd_rx': Q_MEAN.d_rx}]},
        rmse=rmse_values(trace.samples, clean.samples), objective=0.0, seed=1, n_starts=1,
        converged=True, injection={'t_w': INJ.t_w, 't_0': INJ.t_0})
    assert injection_from_report(report) == INJ
    revalidate_report(report, trace)
    report.rmse *= 1.001
    with pytest.raises(TraceValidationError):
        revalidate_report(report, trace)
    report.injection = None
    with pytest.raises(TraceParseError):
        injection_from_report(report)


def test_report_json_is_sorted_and_strict():
    report = FitReport(trace_ref='t', model_kind='acc', parameters={'b': 0.1, 'a': 0.5},
                       rmse=0.01, objective=0.02, seed=3, n_starts=4, converged=True)
    data = json.loads(format_report(report))
    assert list(data) == sorted(data)
    assert data['timestamp'] is None
    report.objective = float('nan')
    with pytest.raises(ValueError):
        format_report(report)
    with pytest.raises(TraceValidationError):
        FitReport(trace_ref='t', model_kind='acc', parameters={}, rmse=-1.0, objective=0.0,
                  seed=0, n_starts=1, converged=False)


def test_read_report_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{\n  \"rmse\": ", encoding='utf-8')
    with pytest.raises(TraceParseError):
        read_report(broken)
    extra = tmp_path / "extra.json"
    extra.write_text(json.dumps({'trace_ref': 't', 'surprise': 1}), encoding='utf-8')
    with pytest.raises(TraceParseError):
        read_report(extra)
    with pytest.raises(DatasetIOError):
        read_report(tmp_path / "absent.json")


def test_report_timestamp_sources(monkeypatch):
    monkeypatch.delenv('SOURCE_DATE_EPOCH', raising=False)
    assert report_timestamp() is None
    assert report_timestamp('2024-05-01T00:00:00Z') == '2024-05-01T00:00:00Z'
    monkeypatch.setenv('SOURCE_DATE_EPOCH', '0')
    assert report_timestamp() == '1970-01-01T00:00:00Z'
    monkeypatch.setenv('SOURCE_DATE_EPOCH', 'soon')
    assert report_timestamp() is None


# ==============================================================================
# 合成数据集
# ==============================================================================

def test_synth_is_deterministic_per_seed():
    spec = default_synth_spec(3, 2, seed=5, duration=40.0)
    a = synth_dataset(spec, seed=5)
    b = synth_dataset(spec, seed=5)
    c = synth_dataset(spec, seed=6)
    for name in a.traces:
        np.testing.assert_array_equal(a.traces[name].samples, b.traces[name].samples)
        assert not np.array_equal(a.traces[name].samples, c.traces[name].samples)
    assert a.truth == b.truth


def test_noise_free_entry_equals_forward_model():
    mixture = MixtureParams.single(Q_MEAN)
    spec = SynthSpec((SynthEntry(name='clean', dt=0.1, n_samples=300, noise_level=0.0,
                                 injection=INJ, mixture=mixture),
                      SynthEntry(name='acc', dt=1.0, n_samples=100, noise_level=0.0,
                                 accumulation=AccumulationParams(a=0.5, b=0.02))))
    data = synth_dataset(spec, seed=0)
    np.testing.assert_array_equal(data.traces['clean'].samples,
                                  model_dist(mixture, INJ, TimeGrid(dt=0.1, n=300)).samples)
    assert data.traces['acc'].kind is TraceKind.ACC
    assert data.truth['acc']['accumulation'] == {'a': 0.5, 'b': 0.02}
    assert data.truth['clean']['components'][0]['v_eff'] == Q_MEAN.v_eff
    assert data.truth['clean']['injection'] == {'t_w': 3.0, 't_0': 1.0}


def test_default_spec_layout():
    spec = default_synth_spec(69, 25, seed=2024)
    assert len(spec.entries) == 69
    assert len({e.egg for e in spec.entries}) == 25
    deds = {}
    for entry in spec.entries:
        assert 8 <= entry.ded <= 15
        assert deds.setdefault(entry.egg, entry.ded) == entry.ded
        assert entry.mixture.n == 2
        assert entry.name == f"egg{entry.egg}_roi{entry.roi}"


def test_write_dataset_with_ground_truth(tmp_path):
    data = synth_dataset(default_synth_spec(2, 1, seed=1, duration=30.0), seed=1)
    paths = write_dataset(data, tmp_path)
    assert len(paths) == 3
    assert read_ground_truth(tmp_path / "ground_truth.json") == data.truth
    for name, trace in data.traces.items():
        back = read_trace(tmp_path / f"{name}.csv")
        np.testing.assert_array_equal(back.samples, trace.samples)
        assert back.extra == {'seed': '1', 'synthetic': 'true'}


@pytest.mark.parametrize("kwargs", [
    dict(name='a/b', dt=0.1, n_samples=10, noise_level=0.0,
         accumulation=AccumulationParams(a=0.5, b=0.1)),
    dict(name='x', dt=0.1, n_samples=1, noise_level=0.0,
         accumulation=AccumulationParams(a=0.5, b=0.1)),
    dict(name='x', dt=0.1, n_samples=10, noise_level=-1.0,
         accumulation=AccumulationParams(a=0.5, b=0.1)),
    dict(name='x', dt=0.1, n_samples=10, noise_level=0.0),
    dict(name='x', dt=0.1, n_samples=10, noise_level=0.0,
         mixture=MixtureParams.single(Q_MEAN)),
])
def test_synth_entry_validation(kwargs):
    with pytest.raises(ChannelDomainError):
        SynthEntry(**kwargs)


def test_synth_spec_rejects_duplicates():
    entry = SynthEntry(name='x', dt=0.1, n_samples=10, noise_level=0.0,
                       accumulation=AccumulationParams(a=0.5, b=0.1))
    with pytest.raises(ChannelDomainError):
        SynthSpec((entry, entry))
    with pytest.raises(ChannelDomainError):
        SynthSpec(())
