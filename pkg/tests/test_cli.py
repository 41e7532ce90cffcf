import pandas as pd

from btar.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main


def _simulate(out):
    return main(["--out", str(out), "--seed", "1", "simulate", "--dgp", "lowrank", "--dims", "2,2,1",
                 "--ranks", "1,1,1,1,1,1", "--T", "30"])


def _fit(data, out, *extra):
    return main(["--out", str(out), "fit", "--data", str(data), "--ranks", "1,1,1,1,1,1",
                 "--n-iter", "10", "--n-burn", "5", *extra])


def test_simulate_fit_factors_volatility(tmp_path):
    assert _simulate(tmp_path / "sim") == EXIT_OK
    data = tmp_path / "sim" / "series.csv"
    assert data.read_text().startswith("# dims=2,2,1 T=31")
    assert (tmp_path / "sim" / "true_coefficients.csv").exists()

    assert _fit(data, tmp_path / "fit", "--regime", "csv") == EXIT_OK
    assert (tmp_path / "fit" / "fit_state.npz").exists()

    assert main(["--out", str(tmp_path / "f"), "factors", "--fit", str(tmp_path / "fit")]) == EXIT_OK
    response = pd.read_csv(tmp_path / "f" / "response_factors.csv")
    assert list(response.columns) == ["t", "1_1_1"]
    assert len(response) == 30

    assert main(["--out", str(tmp_path / "fit"), "volatility"]) == EXIT_OK
    assert (tmp_path / "fit" / "volatility_series.csv").exists()


def test_fit_is_reproducible(tmp_path):
    _simulate(tmp_path / "sim")
    data = tmp_path / "sim" / "series.csv"
    assert _fit(data, tmp_path / "a") == EXIT_OK
    assert _fit(data, tmp_path / "b") == EXIT_OK
    for name in ("coefficients.csv", "parameters.csv", "volatility.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_exit_codes(tmp_path):
    assert main(["--help"]) == EXIT_OK
    assert main(["simulate"]) == EXIT_CONFIG
    assert main(["--out", str(tmp_path), "simulate", "--dgp", "lowrank", "--dims", "2,2,1"]) == EXIT_CONFIG
    _simulate(tmp_path / "sim")
    data = tmp_path / "sim" / "series.csv"
    assert _fit(data, tmp_path / "x", "--n-burn", "10") == EXIT_CONFIG
    assert _fit(tmp_path / "missing.csv", tmp_path / "x") == EXIT_RUNTIME
    assert main(["--out", str(tmp_path / "empty"), "factors"]) == EXIT_RUNTIME
    assert main(["--out", str(tmp_path), "benchmark", "--suite", str(tmp_path / "none.json")]) == EXIT_CONFIG
