import pytest
from fastapi import status


@pytest.fixture
def gt_text(library_dir):
    return (library_dir / "lidded_box.urdf").read_text(encoding="utf-8")


@pytest.fixture
def stored(client, gt_text):
    response = client.post("/evaluations/", json={
        "pred_urdf": gt_text,
        "gt_urdf": gt_text,
        "object_id": "lidded_box",
        "run_id": "run-1",
        "compute_chamfer": False,
    })
    assert response.status_code == status.HTTP_201_CREATED
    return response.json()


class TestEvaluations:
    def test_create(self, stored):
        assert stored["object_id"] == "lidded_box"
        assert stored["object_joint_success"] is True
        assert stored["n_joints"] == 1
        assert stored["report"]["joints"]["lid_joint"]["verdict"] == "success"

    def test_flipped_axis_fails(self, client, gt_text):
        pred = gt_text.replace('<axis xyz="-1 0 0"/>', '<axis xyz="1 0 0"/>')
        assert pred != gt_text
        response = client.post("/evaluations/", json={"pred_urdf": pred, "gt_urdf": gt_text, "compute_chamfer": False})
        assert response.status_code == status.HTTP_201_CREATED
        data = response.json()
        assert data["object_joint_success"] is False
        assert data["failure_category"] == "limit"

    def test_malformed_prediction(self, client, gt_text):
        response = client.post("/evaluations/", json={"pred_urdf": "<robot", "gt_urdf": gt_text, "compute_chamfer": False})
        assert response.status_code == status.HTTP_400_BAD_REQUEST
        assert response.json()["detail"]["code"] == "malformed_xml"

    def test_list_and_filter(self, client, stored):
        assert len(client.get("/evaluations/").json()) == 1
        assert client.get("/evaluations/", params={"run_id": "run-1"}).json()[0]["id"] == stored["id"]
        assert client.get("/evaluations/", params={"run_id": "other"}).json() == []

    def test_get_and_delete(self, client, stored):
        assert client.get(f"/evaluations/{stored['id']}").status_code == status.HTTP_200_OK
        assert client.delete(f"/evaluations/{stored['id']}").status_code == status.HTTP_204_NO_CONTENT
        assert client.get(f"/evaluations/{stored['id']}").status_code == status.HTTP_404_NOT_FOUND
        assert client.delete(f"/evaluations/{stored['id']}").status_code == status.HTTP_404_NOT_FOUND

    def test_summary(self, client, stored):
        response = client.get("/evaluations/summary")
        assert response.status_code == status.HTTP_200_OK
        assert response.json()["n_objects"] == 1

    def test_summary_empty(self, client):
        assert client.get("/evaluations/summary").status_code == status.HTTP_404_NOT_FOUND


class TestCriticAgreement:
    def test_matrix(self, client):
        response = client.post("/evaluations/critic-agreement", json={
            "critic_verdicts": [True, True, False, False],
            "gt_verdicts": [True, False, True, False],
        })
        assert response.status_code == status.HTTP_200_OK
        data = response.json()
        assert (data["tp"], data["fp"], data["fn"], data["tn"]) == (1, 1, 1, 1)
        assert data["accuracy"] == 0.5

    def test_length_mismatch(self, client):
        response = client.post("/evaluations/critic-agreement", json={"critic_verdicts": [True], "gt_verdicts": []})
        assert response.status_code == status.HTTP_400_BAD_REQUEST
