import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import make_image, make_manifest, make_pair
from fgresq.annotation import (
    AnnotationCampaign,
    AnnotationStore,
    AnnotatorProfile,
    assign_pairs,
)
from fgresq.server import create_app, file_image_provider

TOKENS = {
    "tok-ann1": "ann1",
    "tok-ann2": "ann2",
    "tok-ann3": "ann3",
    "tok-ann4": "ann4",
    "tok-exp1": "exp1",
}


def _auth(token):
    return {"Authorization": f"Bearer {token}"}


def _build(tmp_path, n_pairs=6):
    images, pairs, arrays = [], [], {}
    for k in range(n_pairs):
        content = f"c{k}"
        a, b = f"p{k:02d}_a", f"p{k:02d}_b"
        images.append(make_image(a, content_id=content, mos_norm=0.4))
        images.append(make_image(b, content_id=content, mos_norm=0.6))
        pairs.append(make_pair(a, b, status="fine_grained"))
        arrays[a] = np.full((8, 8), 10 * k, dtype=np.uint8)
        arrays[b] = np.full((8, 8), 10 * k + 5, dtype=np.uint8)
    manifest = make_manifest(images, pairs=pairs)
    profiles = [
        AnnotatorProfile("ann1", 1, "annotator"),
        AnnotatorProfile("ann2", 1, "annotator"),
        AnnotatorProfile("ann3", 2, "annotator"),
        AnnotatorProfile("ann4", 2, "annotator"),
        AnnotatorProfile("exp1", None, "expert"),
    ]
    assignment = assign_pairs([p.pair_id for p in pairs], profiles, seed=0)
    store = AnnotationStore(tmp_path / "log.jsonl")
    campaign = AnnotationCampaign(store, assignment, profiles, pairs)

    def provider(image_id):
        return bytes(arrays[image_id].tobytes()), "application/octet-stream"

    app = create_app(campaign, provider, TOKENS)
    return TestClient(app), campaign, assignment, manifest


def _group_pairs(assignment, group):
    return sorted(p for p, g in assignment.pair_group.items() if g == group)


@pytest.fixture
def service(tmp_path):
    return _build(tmp_path)


class TestAuth:
    def test_missing_token_rejected(self, service):
        client, *_ = service
        assert client.get("/session").status_code == 401
        assert client.get("/pairs/next").status_code == 401
        assert client.post("/preferences", json={}).status_code == 401

    def test_unknown_token_rejected(self, service):
        client, *_ = service
        response = client.get("/session", headers=_auth("tok-bogus"))
        assert response.status_code == 401

    def test_malformed_header_rejected(self, service):
        client, *_ = service
        response = client.get("/session", headers={"Authorization": "tok-ann1"})
        assert response.status_code == 401

    def test_session_reflects_profile(self, service):
        client, *_ = service
        body = client.get("/session", headers=_auth("tok-ann1")).json()
        assert body == {"annotator_id": "ann1", "group": 1, "role": "annotator"}
        body = client.get("/session", headers=_auth("tok-exp1")).json()
        assert body == {"annotator_id": "exp1", "group": None, "role": "expert"}

    def test_cross_origin_browser_clients_allowed(self, service):
        client, *_ = service
        response = client.get(
            "/session",
            headers={**_auth("tok-ann1"), "Origin": "http://ui.example"},
        )
        assert response.status_code == 200
        assert response.headers["access-control-allow-origin"] == "*"
        preflight = client.options(
            "/preferences",
            headers={
                "Origin": "http://ui.example",
                "Access-Control-Request-Method": "POST",
                "Access-Control-Request-Headers": "authorization,content-type",
            },
        )
        assert preflight.status_code == 200
        assert "POST" in preflight.headers["access-control-allow-methods"]


class TestPairQueue:
    def test_next_returns_first_unvoted_pair(self, service):
        client, campaign, assignment, _ = service
        own = _group_pairs(assignment, 1)
        body = client.get("/pairs/next", headers=_auth("tok-ann1")).json()
        assert body["pair_id"] == own[0]
        assert body["remaining"] == len(own)
        assert body["round"] == 1
        assert set(body) >= {"pair_id", "image_a", "image_b", "remaining", "round"}
        assert "votes" not in body  # annotators never see the tally

    def test_queue_advances_after_vote(self, service):
        client, campaign, assignment, _ = service
        own = _group_pairs(assignment, 1)
        client.post(
            "/preferences",
            json={"pair_id": own[0], "choice": "A"},
            headers=_auth("tok-ann1"),
        )
        body = client.get("/pairs/next", headers=_auth("tok-ann1")).json()
        assert body["pair_id"] == own[1]
        assert body["remaining"] == len(own) - 1

    def test_drained_queue_returns_null(self, service):
        client, campaign, assignment, _ = service
        for pid in _group_pairs(assignment, 1):
            client.post(
                "/preferences",
                json={"pair_id": pid, "choice": "equal"},
                headers=_auth("tok-ann1"),
            )
        body = client.get("/pairs/next", headers=_auth("tok-ann1")).json()
        assert body == {"pair_id": None, "remaining": 0}

    def test_expert_queue_includes_vote_tally(self, service):
        client, campaign, assignment, _ = service
        pid = _group_pairs(assignment, 1)[0]
        campaign.submit("ann1", pid, "A")
        campaign.submit("ann2", pid, "B")
        body = client.get("/pairs/next", headers=_auth("tok-exp1")).json()
        assert body["pair_id"] == pid
        assert body["votes"] == {"A": 1, "B": 1, "equal": 0}

    def test_expert_queue_empty_without_disagreements(self, service):
        client, *_ = service
        body = client.get("/pairs/next", headers=_auth("tok-exp1")).json()
        assert body == {"pair_id": None, "remaining": 0}


class TestImages:
    def test_image_bytes_served(self, service):
        client, _, assignment, _ = service
        pid = _group_pairs(assignment, 1)[0]
        image_id = pid.split("__")[0]
        response = client.get(f"/images/{image_id}", headers=_auth("tok-ann1"))
        assert response.status_code == 200
        assert len(response.content) == 64

    def test_unknown_image_404(self, service):
        client, *_ = service
        response = client.get("/images/nope", headers=_auth("tok-ann1"))
        assert response.status_code == 404

    def test_file_provider_reads_from_disk(self, tmp_path):
        from PIL import Image

        img_dir = tmp_path / "imgs"
        (img_dir / "scene_a").mkdir(parents=True)
        Image.fromarray(np.zeros((8, 8, 3), dtype=np.uint8)).save(
            img_dir / "scene_a" / "x.png"
        )
        manifest = make_manifest(
            [
                make_image("x", content_id="c0"),
                make_image("y", content_id="c0"),
            ]
        )
        provider = file_image_provider(manifest, img_dir)
        data, media_type = provider("x")
        assert media_type == "image/png"
        assert data[:8] == b"\x89PNG\r\n\x1a\n"


class TestPreferenceEndpoint:
    def test_submit_and_duplicate(self, service):
        client, _, assignment, _ = service
        pid = _group_pairs(assignment, 1)[0]
        ok = client.post(
            "/preferences",
            json={"pair_id": pid, "choice": "A"},
            headers=_auth("tok-ann1"),
        )
        assert ok.status_code == 200
        assert ok.json() == {
            "status": "stored",
            "pair_id": pid,
            "annotator_id": "ann1",
            "choice": "A",
            "round": 1,
        }
        dup = client.post(
            "/preferences",
            json={"pair_id": pid, "choice": "B"},
            headers=_auth("tok-ann1"),
        )
        assert dup.status_code == 409

    def test_unknown_pair_404(self, service):
        client, *_ = service
        response = client.post(
            "/preferences",
            json={"pair_id": "ghost", "choice": "A"},
            headers=_auth("tok-ann1"),
        )
        assert response.status_code == 404

    def test_unassigned_pair_403(self, service):
        client, _, assignment, _ = service
        other = _group_pairs(assignment, 2)[0]
        response = client.post(
            "/preferences",
            json={"pair_id": other, "choice": "A"},
            headers=_auth("tok-ann1"),
        )
        assert response.status_code == 403

    def test_expert_vote_403(self, service):
        client, _, assignment, _ = service
        pid = _group_pairs(assignment, 1)[0]
        response = client.post(
            "/preferences",
            json={"pair_id": pid, "choice": "A"},
            headers=_auth("tok-exp1"),
        )
        assert response.status_code == 403

    def test_invalid_choice_422(self, service):
        client, _, assignment, _ = service
        pid = _group_pairs(assignment, 1)[0]
        response = client.post(
            "/preferences",
            json={"pair_id": pid, "choice": "maybe"},
            headers=_auth("tok-ann1"),
        )
        assert response.status_code == 422

    def test_closed_round_422(self, service):
        client, _, assignment, _ = service
        pid = _group_pairs(assignment, 1)[0]
        response = client.post(
            "/preferences",
            json={"pair_id": pid, "choice": "A", "round": 2},
            headers=_auth("tok-ann1"),
        )
        assert response.status_code == 422


class TestStatusEndpoint:
    def test_status_progression(self, service):
        client, _, assignment, _ = service
        pid = _group_pairs(assignment, 1)[0]
        url = f"/pairs/{pid}/status"
        assert client.get(url, headers=_auth("tok-ann1")).json()["state"] == "incomplete"
        client.post(
            "/preferences",
            json={"pair_id": pid, "choice": "A"},
            headers=_auth("tok-ann1"),
        )
        client.post(
            "/preferences",
            json={"pair_id": pid, "choice": "A"},
            headers=_auth("tok-ann2"),
        )
        body = client.get(url, headers=_auth("tok-ann1")).json()
        assert body["state"] == "unanimous"
        assert body["final_choice"] == "A"
        assert body["votes"] == {"A": 2, "B": 0, "equal": 0}

    def test_unknown_pair_404(self, service):
        client, *_ = service
        response = client.get("/pairs/ghost/status", headers=_auth("tok-ann1"))
        assert response.status_code == 404


class TestResolutionEndpoint:
    def _disagree(self, client, assignment):
        pid = _group_pairs(assignment, 1)[0]
        for token, choice in (("tok-ann1", "A"), ("tok-ann2", "B")):
            client.post(
                "/preferences",
                json={"pair_id": pid, "choice": choice},
                headers=_auth(token),
            )
        return pid

    def test_expert_resolves(self, service):
        client, _, assignment, _ = service
        pid = self._disagree(client, assignment)
        response = client.post(
            "/resolutions",
            json={"pair_id": pid, "final_choice": "A", "rationale": "sharper"},
            headers=_auth("tok-exp1"),
        )
        assert response.status_code == 200
        assert response.json() == {
            "status": "resolved",
            "pair_id": pid,
            "final_choice": "A",
        }
        status = client.get(f"/pairs/{pid}/status", headers=_auth("tok-exp1")).json()
        assert status["final_choice"] == "A"

    def test_annotator_cannot_resolve(self, service):
        client, _, assignment, _ = service
        pid = self._disagree(client, assignment)
        response = client.post(
            "/resolutions",
            json={"pair_id": pid, "final_choice": "A"},
            headers=_auth("tok-ann1"),
        )
        assert response.status_code == 403

    def test_double_resolution_409(self, service):
        client, _, assignment, _ = service
        pid = self._disagree(client, assignment)
        first = client.post(
            "/resolutions",
            json={"pair_id": pid, "final_choice": "A"},
            headers=_auth("tok-exp1"),
        )
        assert first.status_code == 200
        second = client.post(
            "/resolutions",
            json={"pair_id": pid, "final_choice": "B"},
            headers=_auth("tok-exp1"),
        )
        assert second.status_code == 409

    def test_undisputed_pair_409(self, service):
        client, _, assignment, _ = service
        pid = _group_pairs(assignment, 2)[0]
        response = client.post(
            "/resolutions",
            json={"pair_id": pid, "final_choice": "A"},
            headers=_auth("tok-exp1"),
        )
        assert response.status_code == 409

    def test_bad_choice_422(self, service):
        client, _, assignment, _ = service
        pid = self._disagree(client, assignment)
        response = client.post(
            "/resolutions",
            json={"pair_id": pid, "final_choice": "best"},
            headers=_auth("tok-exp1"),
        )
        assert response.status_code == 422

    def test_unknown_pair_404(self, service):
        client, *_ = service
        response = client.post(
            "/resolutions",
            json={"pair_id": "ghost", "final_choice": "A"},
            headers=_auth("tok-exp1"),
        )
        assert response.status_code == 404


class TestExportEndpoint:
    def test_export_counts_match_submissions(self, service):
        client, _, assignment, _ = service
        g1 = _group_pairs(assignment, 1)
        submissions = 0
        for token in ("tok-ann1", "tok-ann2"):
            client.post(
                "/preferences",
                json={"pair_id": g1[0], "choice": "A"},
                headers=_auth(token),
            )
            submissions += 1
        for token, choice in (("tok-ann1", "A"), ("tok-ann2", "B")):
            client.post(
                "/preferences",
                json={"pair_id": g1[1], "choice": choice},
                headers=_auth(token),
            )
            submissions += 1
        client.post(
            "/resolutions",
            json={"pair_id": g1[1], "final_choice": "B"},
            headers=_auth("tok-exp1"),
        )
        body = client.get("/export", headers=_auth("tok-exp1")).json()
        assert len(body["preferences"]) == submissions
        assert len(body["resolutions"]) == 1
        assert body["final_labels"] == {g1[0]: "A", g1[1]: "B"}
