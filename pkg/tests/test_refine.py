import json
import shutil

import pytest

from nerfsynth.artifacts import tree_bytes
from nerfsynth.critic.refine import RefineConfig, refine
from nerfsynth.gateway import GatewayConfig, LlmGateway
from nerfsynth.sandbox import StubSandbox


@pytest.fixture
def repo(tmp_path, gold_repo_dir):
    target = tmp_path / "repo"
    shutil.copytree(gold_repo_dir, target)
    return target


def diagnose_entry(new_value):
    return {
        "artifact_class": "floater",
        "suspected_role": "Sampler",
        "rationale": "view-inconsistent blob over the plane",
        "patch": {
            "target_file": "config.py",
            "kind": "hyperparameter-change",
            "payload": {"key": "proposal_warmup", "new_value": new_value},
        },
    }


def gateway_with(tmp_path, diagnose_entries):
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"diagnose": diagnose_entries}))
    return LlmGateway(GatewayConfig(mode="mock", script_path=str(script)))


class TestRefine:
    def test_never_improving_runs_exactly_max_refine_and_reverts_all(self, repo, tmp_path):
        before = tree_bytes(repo)
        sandbox = StubSandbox(psnr_schedule=[20.0, 19.0, 18.0, 17.0, 16.0, 15.0], inject_floater=True)
        gateway = gateway_with(tmp_path, [diagnose_entry(600 + i) for i in range(5)])
        cfg = RefineConfig(max_refine=5, smoke_iters=50, psnr_target=30.0)
        result = refine(repo, sandbox, gateway, cfg, tmp_path / "out")
        assert len(result.history) == 5
        assert result.terminated_by == "max-iterations"
        assert all(rec.decision == "reverted" for rec in result.history)
        assert tree_bytes(repo) == before

    def test_terminates_by_psnr_target_on_iteration_two(self, repo, tmp_path):
        sandbox = StubSandbox(psnr_schedule=[20.0, 21.0, 26.0], inject_floater=True)
        gateway = gateway_with(tmp_path, [diagnose_entry(700), diagnose_entry(800)])
        cfg = RefineConfig(max_refine=5, smoke_iters=50, psnr_target=25.0)
        result = refine(repo, sandbox, gateway, cfg, tmp_path / "out")
        assert result.terminated_by == "psnr-target"
        assert len(result.history) == 2
        assert result.history[-1].decision == "accepted"
        assert result.final_report.psnr_eval == 26.0

    def test_no_feedback_terminates_first_iteration(self, repo, tmp_path):
        sandbox = StubSandbox(psnr_schedule=[20.0], inject_floater=True)
        empty = {"artifact_class": "other", "suspected_role": "Pipeline", "rationale": "clean", "patch": None}
        gateway = gateway_with(tmp_path, [empty])
        cfg = RefineConfig(max_refine=5, smoke_iters=50, psnr_target=30.0)
        result = refine(repo, sandbox, gateway, cfg, tmp_path / "out")
        assert result.terminated_by == "no-feedback"
        assert len(result.history) == 1

    def test_clean_views_short_circuit_without_vlm_call(self, repo, tmp_path):
        sandbox = StubSandbox(psnr_schedule=[20.0], inject_floater=False)
        gateway = gateway_with(tmp_path, [])  # a VLM call would exhaust the script
        cfg = RefineConfig(max_refine=3, smoke_iters=50)
        result = refine(repo, sandbox, gateway, cfg, tmp_path / "out")
        assert result.terminated_by == "no-feedback"
        assert len(result.history) == 1

    def test_critique_files_written(self, repo, tmp_path):
        sandbox = StubSandbox(psnr_schedule=[20.0, 19.0], inject_floater=True)
        gateway = gateway_with(tmp_path, [diagnose_entry(512), diagnose_entry(513)])
        cfg = RefineConfig(max_refine=2, smoke_iters=50)
        result = refine(repo, sandbox, gateway, cfg, tmp_path / "out")
        assert len(result.history) == 2
        for i in (1, 2):
            data = json.loads((tmp_path / "out" / f"critique_{i}.json").read_text())
            assert set(data) == {"rois", "consensus", "diagnoses", "patches", "decision"}

    def test_accepted_patch_persists(self, repo, tmp_path):
        before = tree_bytes(repo)
        sandbox = StubSandbox(psnr_schedule=[20.0, 24.0], inject_floater=True)
        gateway = gateway_with(tmp_path, [diagnose_entry(1024)])
        cfg = RefineConfig(max_refine=1, smoke_iters=50)
        result = refine(repo, sandbox, gateway, cfg, tmp_path / "out")
        assert result.history[0].decision == "accepted"
        assert tree_bytes(repo) != before
        assert "proposal_warmup: int = 1024" in (repo / "config.py").read_text()
