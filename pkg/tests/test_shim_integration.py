"""Primary-to-shim integration over the external process interface.

Skipped unless the shim package has been built (`npm run build` in shim/).
"""

import shutil
from pathlib import Path

import pytest

from nerfsynth.sandbox import ShimSandbox

SHIM_CLI = Path(__file__).resolve().parents[1] / "shim" / "dist" / "cli.js"

pytestmark = pytest.mark.skipif(
    not SHIM_CLI.exists() or shutil.which("node") is None,
    reason="shim not built; run npm run build in shim/",
)


@pytest.fixture
def repo(tmp_path, gold_repo_dir):
    target = tmp_path / "repo"
    shutil.copytree(gold_repo_dir, target)
    return target


def shim_sandbox():
    return ShimSandbox(command=["node", str(SHIM_CLI)])


class TestShimIntegration:
    def test_stub_smoke_via_shim_process(self, repo):
        report = shim_sandbox().run_smoke(repo, iters=12)
        assert report.imports_resolve and report.registered
        assert report.train_started and report.steps_completed == 12
        assert not report.nan_detected
        assert report.psnr_eval is not None

    def test_syntax_error_repo_reported_not_crashed(self, repo):
        (repo / "model.py").write_text("def get_outputs(:\n")
        report = shim_sandbox().run_smoke(repo, iters=5)
        assert not report.imports_resolve
        assert report.error["stage"] == "import"
        assert report.error["file"] == "model.py"

    def test_ladder_trainable_from_shim_report(self, repo):
        from nerfsynth.bench import ladder_evaluate

        report = shim_sandbox().run_smoke(repo, iters=12)
        ladder = ladder_evaluate(report, psnr_target=None)
        assert ladder.trainable and ladder.stable
