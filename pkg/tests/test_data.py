import numpy as np
import pytest
from scipy.stats import kendalltau

from survcf import CsvSchema, Dataset, GeneratorConfig, EventRecord, draw_coefficients, generate_synthetic, load_csv, write_csv
from survcf.data import SCHEMAS, STANFORD2, myeloid_schema, weibull_cox_time


def test_weibull_time_examples():
    assert weibull_cox_time(np.exp(-1.0), 0.0) == pytest.approx(np.sqrt(1e5), rel=1e-15)
    assert weibull_cox_time(np.exp(-1.0), 0.0) == pytest.approx(316.23, abs=5e-3)
    assert weibull_cox_time(1.0 - 1e-16, 0.0) < 1e-5
    assert weibull_cox_time(1.0, 0.0) == 0.0


def test_config_defaults_and_validation():
    cfg = GeneratorConfig(n=10, d=2, b=(0.1, 0.2))
    assert (cfg.lambda_0, cfg.v, cfg.censor_event_prob) == (1e-5, 2.0, 0.9)
    with pytest.raises(ValueError):
        GeneratorConfig(n=10, d=2, b=(0.1,))
    with pytest.raises(ValueError):
        GeneratorConfig(n=10, d=1, b=(0.1,), v=0)
    with pytest.raises(ValueError):
        GeneratorConfig(n=10, d=1, b=(0.1,), censor_event_prob=1.5)


def test_generated_times_invert_the_survival_relation():
    b = np.array([0.4, 0.9, 0.1])
    cfg = GeneratorConfig(n=500, d=3, b=tuple(b), seed=4)
    data = generate_synthetic(cfg)
    # replay the documented stream: features, then xi, then event flags
    rng = np.random.default_rng([4, 0])
    X = rng.uniform(size=(500, 3))
    xi = rng.uniform(size=500)
    assert np.array_equal(data.X, X)
    back = np.exp(-cfg.lambda_0 * np.exp(X @ b) * data.time ** cfg.v)
    assert np.allclose(back, xi, rtol=1e-12, atol=0)
    assert np.all((data.X >= 0) & (data.X <= 1))


def test_event_fraction_within_three_sigma():
    n, p = 20_000, 0.9
    data = generate_synthetic(GeneratorConfig(n=n, d=2, b=(0.5, 0.5), seed=1))
    assert abs(data.event.mean() - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_determinism_and_seed_sensitivity():
    cfg = GeneratorConfig(n=50, d=2, b=(0.5, 0.5), seed=3)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.time, b.time) and np.array_equal(a.event, b.event)
    c = generate_synthetic(GeneratorConfig(n=50, d=2, b=(0.5, 0.5), seed=4))
    assert not np.array_equal(a.time, c.time)
    assert np.array_equal(draw_coefficients(5, 2), draw_coefficients(5, 2))
    assert np.all((draw_coefficients(50, 2) >= 0) & (draw_coefficients(50, 2) <= 1))


def test_larger_risk_shortens_survival():
    b = np.array([0.8, 0.6, 0.3])
    data = generate_synthetic(GeneratorConfig(n=10_000, d=3, b=tuple(b), seed=5))
    tau, p = kendalltau(data.X @ b, data.time)
    assert tau < 0 and p < 1e-6


# ---- CSV


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_three_row_csv(tmp_path):
    path = write(tmp_path, "x1,x2,time,event\n0.5,1,3.0,1\n-2,0.25,1.5,0\n7,8,2,1\n")
    data, dropped = load_csv(path)
    assert dropped == 0
    assert data.records == [
        EventRecord(np.array([0.5, 1.0]), 1, 3.0),
        EventRecord(np.array([-2.0, 0.25]), 0, 1.5),
        EventRecord(np.array([7.0, 8.0]), 1, 2.0),
    ]
    assert data.feature_names == ("x1", "x2")


def test_stanford2_schema(tmp_path):
    text = "id,time,status,age,t5\n1,10,1,50,1.1\n2,20,0,45,NA\n3,30,1,60,0.5\n4,40,1,30,2.0\n"
    data, dropped = load_csv(write(tmp_path, text), STANFORD2)
    assert dropped == 1
    assert data.feature_names == ("age", "t5")
    assert data.X.tolist() == [[50, 1.1], [60, 0.5], [30, 2.0]]
    assert data.event.tolist() == [1, 1, 1]


def test_myeloid_schema_drops_sex_and_splits_by_arm(tmp_path):
    text = (
        "id,trt,sex,flt3,futime,death,txtime,crtime,rltime\n"
        "1,A,f,0.2,100,1,5,6,7\n"
        "2,B,m,0.4,200,0,5,,7\n"
        "3,A,m,0.1,300,0,1,2,3\n"
        "4,B,f,0.9,150,1,2,2,2\n"
        "5,B,f,0.3,250,1,1,1,1\n"
    )
    path = write(tmp_path, text)
    a, dropped_a = load_csv(path, myeloid_schema("A"))
    b, dropped_b = load_csv(path, SCHEMAS["myeloid-b"])
    assert a.feature_names == b.feature_names == ("flt3", "txtime", "crtime", "rltime")
    assert a.n == 2 and dropped_a == 0
    assert b.n == 2 and dropped_b == 1


def test_csv_errors(tmp_path):
    with pytest.raises(ValueError, match="column 'event' not found"):
        load_csv(write(tmp_path, "x1,time\n1,2\n"))
    with pytest.raises(ValueError, match="feature columns"):
        load_csv(write(tmp_path, "x1,time,event\n1,2,1\n1,3,1\n"), CsvSchema(features=("age",)))
    with pytest.raises(ValueError, match="cannot parse"):
        load_csv(write(tmp_path, "x1,time,event\nabc,2,1\n1,3,1\n"))
    with pytest.raises(ValueError, match="no usable rows"):
        load_csv(write(tmp_path, "x1,time,event\nNA,2,1\n"))
    with pytest.raises(ValueError, match="0 or 1"):
        load_csv(write(tmp_path, "x1,time,event\n1,2,3\n1,3,1\n"))


def test_write_then_load_is_bit_exact(tmp_path):
    data = generate_synthetic(GeneratorConfig(n=100, d=3, b=(0.2, 0.5, 0.9), seed=6))
    path = tmp_path / "out.csv"
    write_csv(data, path)
    again, _ = load_csv(path)
    assert np.array_equal(again.X, data.X)
    assert np.array_equal(again.time, data.time)
    assert np.array_equal(again.event, data.event)
    assert isinstance(again, Dataset)
