import numpy as np


def test_home_endpoint(client):
    response = client.get("/")

    assert response.status_code == 200
    payload = response.json()
    assert payload["message"] == "BTAR API running"
    assert payload["status"] == "success"
    assert payload["data"]["service"] == "btar"


def test_api_info_endpoint(client):
    response = client.get("/api-info")

    assert response.status_code == 200
    payload = response.json()
    assert payload["message"] == "API information"
    assert payload["status"] == "success"
    assert payload["data"]["docs_url"] == "/docs"
    assert payload["data"]["service"] == "BTAR Toolkit"


def test_simulate_returns_presample_and_radius(client):
    body = {"kind": "lowrank", "dims": [2, 2, 2], "ranks": [1, 1, 1, 1, 1, 1], "T": 20, "seed": 3}
    response = client.post("/simulate", json=body)

    assert response.status_code == 200
    data = response.json()["data"]
    series = np.asarray(data["series"])
    assert series.shape == (21, 2, 2, 2)
    assert 0.0 <= data["spectral_radius"] <= 0.95 + 1e-9
    assert np.asarray(data["coefficients"]).shape == (8, 8)


def test_simulate_is_reproducible(client):
    body = {"kind": "dense_var", "dims": [2, 1, 2], "T": 10, "seed": 11}
    first = client.post("/simulate", json=body).json()["data"]["series"]
    second = client.post("/simulate", json=body).json()["data"]["series"]
    assert first == second


def test_simulate_rejects_missing_ranks(client):
    response = client.post("/simulate", json={"kind": "lowrank", "dims": [2, 2, 2]})
    assert response.status_code == 422


def test_fit_returns_coefficients_and_acceptance(client):
    rng = np.random.default_rng(5)
    series = rng.standard_normal((16, 2, 1, 2)).tolist()
    body = {
        "series": series,
        "ranks": [1, 1, 1, 1, 1, 1],
        "regime": "csv",
        "n_iter": 30,
        "n_burn": 10,
        "seed": 1,
    }
    response = client.post("/fit", json=body)

    assert response.status_code == 200
    data = response.json()["data"]
    assert np.asarray(data["coefficients"]).shape == (4, 4)
    assert data["n_draws"] == 20
    assert np.isfinite(data["mean_log_likelihood"])
    assert set(data["acceptance"]) >= {"h", "phi"}


def test_fit_rejects_large_problems(client):
    series = np.zeros((4, 3, 3, 1)).tolist()
    response = client.post("/fit", json={"series": series, "ranks": [1] * 6, "n_iter": 5, "n_burn": 1})

    assert response.status_code == 413
    assert response.json()["status"] == "error"


def test_fit_maps_invalid_schedule_to_422(client):
    series = np.zeros((6, 2, 1, 1)).tolist()
    response = client.post("/fit", json={"series": series, "ranks": [1] * 6, "n_iter": 5, "n_burn": 5})

    assert response.status_code == 422
    assert response.json()["data"]["error"] == "ConfigError"


def test_fit_maps_rank_errors_to_422(client):
    series = np.zeros((6, 2, 1, 1)).tolist()
    response = client.post("/fit", json={"series": series, "ranks": [2, 2, 2, 2, 2, 2], "n_iter": 5, "n_burn": 1})

    assert response.status_code == 422
    assert response.json()["status"] == "error"
