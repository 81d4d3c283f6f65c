import json
import threading

import httpx
import numpy as np
import pytest

from neyman.designs import (
    advance,
    finalize,
    init_design,
)
from neyman.service import config_from_request, make_server

from conftest import scaled_sample


@pytest.fixture()
def client(tmp_path):
    server = make_server(0, tmp_path / "sessions")
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    port = server.server_address[1]
    with httpx.Client(base_url=f"http://127.0.0.1:{port}") as c:
        yield c
    server.shutdown()


def create(client, body):
    response = client.post("/v1/sessions", json=body)
    assert response.status_code == 200, response.text
    return response.json()


class TestCreateSession:
    def test_two_stage(self, client):
        created = create(client, {"M": 2, "T": 10_000, "beta": 1})
        assert created["stage"]["t1"] == 50
        assert created["stage"]["t0"] == 50
        assert created["case_label"] == "Init"

    def test_multi_stage_at_smallest_horizon(self, client):
        created = create(client, {"M": 3, "T": 16, "schedule": "geometric"})
        assert created["stage"]["t1"] == 3

    def test_infeasible_config(self, client):
        response = client.post(
            "/v1/sessions", json={"M": 3, "T": 8, "schedule": "geometric"}
        )
        assert response.status_code == 400
        assert response.json()["code"] == "InfeasibleConfig"

    def test_fresh_case_path(self, client):
        created = create(client, {"M": 3, "T": 16, "schedule": "geometric"})
        snap = client.get(f"/v1/sessions/{created['session_id']}").json()
        assert snap["case_path"] == ["Init"]


class TestSubmitStage:
    def test_full_two_stage_session(self, client):
        created = create(client, {"M": 2, "T": 16, "beta": 1})
        sid = created["session_id"]
        first = client.post(
            f"/v1/sessions/{sid}/stages",
            json={"treated": [5.0, 5.0], "control": [5.0, 5.0]},
        )
        assert first.status_code == 200
        body = first.json()
        assert body["case_label"] == "Plugin2Stage"
        assert body["stage"]["t1"] == 6
        assert body["sigma_hat"] == {"treated": 0.0, "control": 0.0}
        second = client.post(
            f"/v1/sessions/{sid}/stages",
            json={"treated": [5.0] * 6, "control": [5.0] * 6},
        )
        final = second.json()
        assert final["done"] is True
        assert final["totals"] == {"t1": 8, "t0": 8}
        assert final["tau_hat"] == 0.0

    def test_count_mismatch(self, client):
        created = create(client, {"M": 2, "T": 16, "beta": 1})
        response = client.post(
            f"/v1/sessions/{created['session_id']}/stages",
            json={"treated": [5.0], "control": [5.0, 5.0]},
        )
        assert response.status_code == 422
        assert response.json()["code"] == "CountMismatch"

    def test_duplicate_submit_replays_response(self, client):
        created = create(client, {"M": 2, "T": 16, "beta": 1})
        sid = created["session_id"]
        payload = {"treated": [1.0, 2.0], "control": [3.0, 4.0]}
        first = client.post(f"/v1/sessions/{sid}/stages", json=payload)
        replay = client.post(f"/v1/sessions/{sid}/stages", json=payload)
        assert replay.status_code == 200
        assert replay.json() == first.json()
        # A different payload at the already-advanced stage is a conflict
        # unless it matches the now-pending allocation's counts.
        snap = client.get(f"/v1/sessions/{sid}").json()
        assert len(snap["case_path"]) == 2

    def test_submit_after_done_conflicts(self, client):
        created = create(client, {"M": 2, "T": 16, "beta": 1})
        sid = created["session_id"]
        client.post(
            f"/v1/sessions/{sid}/stages",
            json={"treated": [5.0, 6.0], "control": [5.0, 6.0]},
        )
        client.post(
            f"/v1/sessions/{sid}/stages",
            json={"treated": [5.0] * 6, "control": [5.0] * 6},
        )
        response = client.post(
            f"/v1/sessions/{sid}/stages", json={"treated": [], "control": []}
        )
        assert response.status_code == 409

    def test_unknown_session(self, client):
        assert client.get("/v1/sessions/nope").status_code == 404
        response = client.post(
            "/v1/sessions/nope/stages", json={"treated": [], "control": []}
        )
        assert response.status_code == 404


class TestServiceMirrorsLibrary:
    def test_replay_equals_direct_state_machine(self, client):
        rng = np.random.default_rng(4)
        config_body = {"M": 3, "T": 1000, "schedule": "geometric"}
        created = create(client, config_body)
        sid = created["session_id"]

        state, alloc = init_design(config_from_request(config_body))
        assert created["stage"]["t1"] == alloc.t1

        while True:
            pending = state.pending
            treated = scaled_sample(rng, pending.t1, 2.0).tolist()
            control = scaled_sample(rng, pending.t0, 1.0).tolist()
            response = client.post(
                f"/v1/sessions/{sid}/stages",
                json={"treated": treated, "control": control},
            ).json()
            advance(state, treated, control)
            if state.done:
                totals, tau = finalize(state)
                assert response["done"] is True
                assert response["totals"] == {"t1": totals.t1, "t0": totals.t0}
                assert response["tau_hat"] == pytest.approx(tau, rel=1e-12)
                break
            assert response["stage"]["t1"] == state.pending.t1
            assert response["stage"]["t0"] == state.pending.t0
        snap = client.get(f"/v1/sessions/{sid}").json()
        assert snap["case_path"] == state.case_path

    def test_session_replays_an_advise_transcript(self, client):
        # The interactive CLI protocol and the service share one state
        # machine: a transcript fed to both yields identical allocations.
        import subprocess
        import sys

        stdin = "OBS 1 5 5\nOBS 0 5 5\nOBS 1 5 5 5 5 5 5\nOBS 0 5 5 5 5 5 5\n"
        advise = subprocess.run(
            [sys.executable, "-m", "neyman.cli", "advise", "--T", "16",
             "--M", "2", "--beta", "1"],
            input=stdin, capture_output=True, text=True,
        )
        stages = [
            tuple(int(v) for v in line.split()[-2:])
            for line in advise.stdout.splitlines()
            if "ALLOCATE" in line
        ]
        tau_line = advise.stdout.splitlines()[-1]
        assert tau_line.startswith("DONE tau_hat=")

        created = create(client, {"M": 2, "T": 16, "beta": 1})
        sid = created["session_id"]
        service_stages = [(created["stage"]["t1"], created["stage"]["t0"])]
        first = client.post(
            f"/v1/sessions/{sid}/stages",
            json={"treated": [5.0, 5.0], "control": [5.0, 5.0]},
        ).json()
        service_stages.append((first["stage"]["t1"], first["stage"]["t0"]))
        final = client.post(
            f"/v1/sessions/{sid}/stages",
            json={"treated": [5.0] * 6, "control": [5.0] * 6},
        ).json()
        assert service_stages == stages
        assert float(tau_line.split("=")[1]) == final["tau_hat"]

    def test_persistence_across_server_restart(self, tmp_path):
        state_dir = tmp_path / "sessions"
        server = make_server(0, state_dir)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        port = server.server_address[1]
        with httpx.Client(base_url=f"http://127.0.0.1:{port}") as c:
            sid = create(c, {"M": 2, "T": 16, "beta": 1})["session_id"]
            c.post(
                f"/v1/sessions/{sid}/stages",
                json={"treated": [1.0, 2.0], "control": [3.0, 4.0]},
            )
        server.shutdown()

        second = make_server(0, state_dir)
        thread = threading.Thread(target=second.serve_forever, daemon=True)
        thread.start()
        port = second.server_address[1]
        with httpx.Client(base_url=f"http://127.0.0.1:{port}") as c:
            snap = c.get(f"/v1/sessions/{sid}")
            assert snap.status_code == 200
            assert len(snap.json()["case_path"]) == 2
        second.shutdown()


class TestPreview:
    def test_preview_matches_commit(self, client):
        created = create(client, {"M": 3, "T": 1000, "schedule": "geometric"})
        sid = created["session_id"]
        payload = {"treated": [float(i) for i in range(12)],
                   "control": [0.5 * i for i in range(12)]}
        peek = client.post(f"/v1/sessions/{sid}/preview", json=payload).json()
        commit = client.post(f"/v1/sessions/{sid}/stages", json=payload).json()
        assert peek["stages"][0]["t1"] == commit["stage"]["t1"]
        assert peek["stages"][0]["t0"] == commit["stage"]["t0"]

    def test_preview_does_not_mutate(self, client):
        created = create(client, {"M": 3, "T": 1000, "schedule": "geometric"})
        sid = created["session_id"]
        client.post(
            f"/v1/sessions/{sid}/preview",
            json={"sigma_hat": {"treated": 3.0, "control": 1.0}},
        )
        snap = client.get(f"/v1/sessions/{sid}").json()
        assert snap["case_path"] == ["Init"]
        assert snap["cumulative"] == {"t1": 0, "t0": 0}

    def test_sigma_swap_transposes(self, client):
        created = create(client, {"M": 3, "T": 1000, "schedule": "geometric"})
        sid = created["session_id"]
        fwd = client.post(
            f"/v1/sessions/{sid}/preview",
            json={"sigma_hat": {"treated": 3.0, "control": 1.0}},
        ).json()
        rev = client.post(
            f"/v1/sessions/{sid}/preview",
            json={"sigma_hat": {"treated": 3.0, "control": 1.0}, "swap_arms": True},
        ).json()
        assert fwd["stages"][0]["t1"] == rev["stages"][0]["t0"]
        assert fwd["stages"][0]["t0"] == rev["stages"][0]["t1"]

    def test_config_preview(self, client):
        created = create(client, {"M": 3, "T": 1000, "schedule": "geometric"})
        sid = created["session_id"]
        peek = client.post(
            f"/v1/sessions/{sid}/preview",
            json={"config": {"M": 4, "T": 1000, "schedule": "geometric"}},
        ).json()
        assert peek["stage"]["stage_index"] == 1
        assert peek["config"]["M"] == 4


class TestSimulations:
    def test_sync_batch_deterministic_bytes(self, client):
        body = {
            "design": {"M": 2, "T": 200, "beta": 1},
            "pop": {"kind": "gaussian", "sigma1": 2.0, "sigma0": 1.0},
            "n": 64,
            "master_seed": 5,
        }
        a = client.post("/v1/simulations", json=body)
        b = client.post("/v1/simulations", json=body)
        assert a.status_code == 200
        assert a.content == b.content
        assert a.json()["result"]["n"] == 64

    def test_single_trajectory(self, client):
        body = {
            "design": {"M": 2, "T": 200, "beta": 1},
            "pop": {"kind": "gaussian", "sigma1": 1.0, "sigma0": 1.0},
            "n": 1,
            "master_seed": 0,
        }
        result = client.post("/v1/simulations", json=body).json()["result"]
        assert result["n"] == 1
        assert result["mean_ratio"] >= 1.0

    def test_compare_variance_reduction(self, client):
        body = {
            "designs": [
                {"design": "half_half", "M": 1, "T": 1000},
                {"M": 2, "T": 1000, "beta": 10},
            ],
            "pop": {"kind": "table1", "n_per_arm": 40, "seed": 0},
            "n": 3000,
            "master_seed": 99,
        }
        results = client.post("/v1/simulations", json=body).json()["results"]
        balanced, adaptive = results
        reduction = 1 - adaptive["var_tau_hat"] / balanced["var_tau_hat"]
        assert 0.02 < reduction < 0.2

    def test_async_job_handle(self, client):
        body = {
            "design": {"M": 2, "T": 64, "beta": 1},
            "pop": {"kind": "gaussian", "sigma1": 1.0, "sigma0": 1.0},
            "n": 10_001,
            "master_seed": 1,
        }
        accepted = client.post("/v1/simulations", json=body)
        assert accepted.status_code == 202
        job_id = accepted.json()["job_id"]
        for _ in range(600):
            poll = client.get(f"/v1/simulations/{job_id}").json()
            if poll["status"] == "done":
                assert poll["result"]["result"]["n"] == 10_001
                break
        else:
            pytest.fail("job never finished")

    def test_bad_population(self, client):
        body = {
            "design": {"M": 2, "T": 64, "beta": 1},
            "pop": {"kind": "cauchy"},
            "n": 4,
        }
        assert client.post("/v1/simulations", json=body).status_code == 400
