"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line on the real stderr so the outcome survives pytest capture."""

import itertools
import json
import math
import shutil
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from nerfsynth.artifacts import load_interfaces, load_repo_files, tree_bytes
from nerfsynth.bench import (
    NoveltyItem,
    ladder_evaluate,
    llm_score,
    load_judgments,
    novelty_coverage,
    round2,
)
from nerfsynth.citations import discover_dependencies, is_resolved, resolve_transitive
from nerfsynth.cli import build_parser, main
from nerfsynth.critic.consensus import cross_view_consensus, error_masks, ConsensusConfig
from nerfsynth.critic.fields import WindowConfig, compute_error_fields
from nerfsynth.critic.refine import RefineConfig, refine
from nerfsynth.critic.rois import extract_rois
from nerfsynth.critic.synthetic import inject_floater, make_plane_scene
from nerfsynth.fetch import FixtureFetcher
from nerfsynth.gateway import GatewayConfig, LlmGateway
from nerfsynth.grammar import load_grammar, validate_repository
from nerfsynth.repograph import CycleDetected, FileRecord, RepositoryGraph, build_repo_dag, reachability, topological_order
from nerfsynth.sandbox import StubSandbox
from nerfsynth.synthesizer import SynthConfig, integration_test

FIXTURES = Path(__file__).parent / "fixtures"


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL", file=sys.__stderr__)
        raise
    print(f"[ACCEPTANCE] {name}: PASS", file=sys.__stderr__)


def _random_dag(rng, n):
    names = [f"f{i}.py" for i in range(n)]
    perm = rng.permutation(n)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.35:
                edges.add((names[perm[i]], names[perm[j]]))
    files = {nm: FileRecord(nm, nm, "Model", "") for nm in names}
    return names, edges, RepositoryGraph(files=files, edges=edges)


def _closure(names, edges):
    n = len(names)
    idx = {nm: i for i, nm in enumerate(names)}
    mat = np.zeros((n, n), dtype=bool)
    for u, v in edges:
        mat[idx[u], idx[v]] = True
    closure = mat.copy()
    for _ in range(n):
        closure = closure | (closure @ mat)
    return mat, closure


class TestAcceptance:
    def test_graph_oracle_suite(self):
        with criterion("graph-oracle-suite (1000 random DAGs, <10s)"):
            start = time.monotonic()
            rng = np.random.default_rng(2024)
            perms_cache = {}
            for trial in range(1000):
                n = int(rng.integers(2, 9))
                names, edges, graph = _random_dag(rng, n)
                order = topological_order(graph)
                pos = {nm: k for k, nm in enumerate(order)}
                assert all(pos[u] < pos[v] for u, v in edges)
                mat, closure = _closure(names, edges)
                # Reachability matches the boolean-closure oracle exactly.
                for i, a in enumerate(names):
                    for j, b in enumerate(names):
                        if i != j:
                            assert reachability(graph, a, b) == bool(closure[i, j])
                if n <= 7:
                    # Permutation oracle: the order is one of the valid ones.
                    if n not in perms_cache:
                        perms_cache[n] = np.array(list(itertools.permutations(range(n))), dtype=np.int8)
                    perms = perms_cache[n]
                    positions = np.argsort(perms, axis=1)
                    valid = np.ones(len(perms), dtype=bool)
                    idx = {nm: i for i, nm in enumerate(names)}
                    for u, v in edges:
                        valid &= positions[:, idx[u]] < positions[:, idx[v]]
                    got = np.array([idx[nm] for nm in order], dtype=np.int8)
                    assert (perms[valid] == got).all(axis=1).any()
                # Cycle detection agrees with the closure diagonal.
                extra = set(edges)
                if n >= 2:
                    lo, hi = names[0], names[1]
                    extra = edges | {(hi, lo), (lo, hi)}
                _, cyc_closure = _closure(names, extra)
                has_cycle = bool(np.any(np.diag(cyc_closure)))
                try:
                    build_repo_dag([FileRecord(nm, nm, "Model", "") for nm in names],
                                   plan_edges=sorted(extra))
                    detected = False
                except CycleDetected:
                    detected = True
                assert detected == has_cycle
            elapsed = time.monotonic() - start
            assert elapsed < 10.0, f"took {elapsed:.2f}s"

    def test_citation_fixture(self):
        with criterion("citation-fixture (7 direct, 12 nodes, resolved; cycles bounded)"):
            fetcher = FixtureFetcher(FIXTURES / "kplanes" / "graph.json")
            doc = fetcher.fetch_key("kplanes")
            assert len(discover_dependencies(doc)) == 7
            graph = resolve_transitive(doc, fetcher)
            assert graph.node_count() == 12
            ok, report = is_resolved(graph)
            assert ok, report
            # Cyclic citation data terminates with node count <= universe.
            import tempfile

            with tempfile.TemporaryDirectory() as tmp:
                cites = {"a": ["b", "c"], "b": ["a"], "c": ["a", "b"]}
                path = Path(tmp) / "graph.json"
                path.write_text(json.dumps({"papers": {}, "cites": cites}))
                cyc_fetcher = FixtureFetcher(path)
                cyc = resolve_transitive(cyc_fetcher.fetch_key("a"), cyc_fetcher)
                assert cyc.node_count() <= len(cites)

    def test_grammar_suite(self):
        with criterion("grammar-suite (gold passes; 10 mutations, 1 violation each)"):
            from test_grammar import MUTATIONS, _apply_mutation

            grammar = load_grammar()
            gold_dir = FIXTURES / "gold_skeleton" / "repo"
            files = load_repo_files(gold_dir)
            interfaces = load_interfaces(gold_dir)
            assert validate_repository(grammar, files, interfaces).passed
            for name, mutated_file, rule in MUTATIONS:
                files = load_repo_files(gold_dir)
                interfaces = load_interfaces(gold_dir)
                _apply_mutation(name, files, interfaces)
                report = validate_repository(grammar, files, interfaces)
                assert not report.passed
                assert len(report.violations) == 1, (name, report.to_dict())
                assert report.violations[0].file == mutated_file
                assert report.violations[0].rule == rule

    def test_image_metric_oracle(self):
        with criterion("image-metric-oracle (50 pairs within 1e-6; 6.02 dB window)"):
            from test_critic_fields import oracle_fields

            cfg = WindowConfig()
            rng = np.random.default_rng(77)
            for _ in range(50):
                render = rng.random((64, 64, 3))
                gt = np.clip(render + rng.normal(0, rng.uniform(0.02, 0.3), render.shape), 0, 1)
                field = compute_error_fields(render, gt, cfg)
                psnr_ref, ssim_ref = oracle_fields(render, gt, cfg)
                assert np.max(np.abs(field.psnr_map - psnr_ref)) < 1e-6
                assert np.max(np.abs(field.ssim_map - ssim_ref)) < 1e-6
            identical = rng.random((64, 64, 3))
            field = compute_error_fields(identical, identical, cfg)
            assert extract_rois(field) == []
            gray = compute_error_fields(np.full((64, 64), 0.5), np.zeros((64, 64)), cfg)
            assert np.all(np.abs(gray.psnr_map - 10 * math.log10(1 / 0.25)) < 0.01)

    def test_consensus_suite(self):
        with criterion("consensus-suite (0 flags consistent; P/R >= 0.9; <30s)"):
            start = time.monotonic()
            views = make_plane_scene(n_views=3)
            assert cross_view_consensus(views).total_flagged() == 0
            views = make_plane_scene(n_views=3)
            injected = inject_floater(views[1], center=(24, 32), radius=7)
            cfg = ConsensusConfig()
            result = cross_view_consensus(views, cfg)
            flagged = result.masks[1]
            tp = float(np.sum(flagged & injected))
            precision = tp / max(float(flagged.sum()), 1.0)
            recall = tp / float(injected.sum())
            assert precision >= 0.9 and recall >= 0.9, (precision, recall)
            # Per-pixel reprojection oracle agreement on the flagged view.
            from test_consensus import oracle_flags

            masks = error_masks(views, cfg.error_threshold)
            expected = oracle_flags(views, masks, cfg)
            for got, ref in zip(result.masks, expected):
                assert np.array_equal(got, ref)
            elapsed = time.monotonic() - start
            assert elapsed < 30.0, f"took {elapsed:.2f}s"

    def test_metrics_reproduction(self):
        with criterion("metrics-reproduction (published rows exact; C+I+M=1; scale-exact)"):
            expected = json.loads((FIXTURES / "judgments" / "expected.json").read_text())
            assert len(expected) == 10
            for paper, systems in expected.items():
                assert len(systems) == 5
                for system, values in systems.items():
                    items = load_judgments(FIXTURES / "judgments" / f"{paper}__{system}.json")
                    cov = novelty_coverage(items)
                    got = {
                        "C": round2(cov.C), "I": round2(cov.I), "M": round2(cov.M),
                        "W": round2(cov.W), "score": round2(llm_score(items)),
                    }
                    assert got == values, f"{paper}/{system}"
            mip = novelty_coverage(load_judgments(FIXTURES / "judgments" / "mipnerf__paper2code.json"))
            assert (round2(mip.C), round2(mip.I), round2(mip.M), round2(mip.W)) == (0.83, 0.17, 0.00, 0.83)

            rng = np.random.default_rng(5)
            statuses = ["correct", "incorrect-partial", "missing"]
            levels = [0.2, 0.4, 0.6, 0.8, 1.0]
            for _ in range(1000):
                n = int(rng.integers(1, 15))
                items = []
                for i in range(n):
                    status = statuses[int(rng.integers(0, 3))]
                    items.append(NoveltyItem(
                        id=f"i{i}", description="", weight=float(rng.uniform(0.05, 1.0)),
                        status=status,
                        level=0.0 if status == "missing" else levels[int(rng.integers(0, 5))],
                    ))
                cov = novelty_coverage(items)
                assert abs(cov.C + cov.I + cov.M - 1.0) < 1e-9
                assert all(0.0 <= v <= 1.0 for v in (cov.C, cov.I, cov.M, cov.W))
                base = llm_score(items)
                for scale in (0.5, 0.25):
                    scaled = [
                        NoveltyItem(id=i.id, description="", weight=i.weight * scale,
                                    status=i.status, level=i.level)
                        for i in items
                    ]
                    assert llm_score(scaled) == base  # exact under power-of-two scaling

    def test_end_to_end_determinism(self, tmp_path):
        with criterion("end-to-end-determinism (byte-identical replay; refine reverts; <60s)"):
            start = time.monotonic()
            cache_dir = tmp_path / "cache"
            paper = str(FIXTURES / "papers" / "minimal.md")

            def llm_cfg(name, mode):
                cfg = {"mode": mode, "cache_dir": str(cache_dir)}
                if mode == "mock":
                    cfg["script_path"] = str(FIXTURES / "minimal" / "script.json")
                path = tmp_path / name
                path.write_text(json.dumps(cfg))
                return str(path)

            base_args = ["--paper", paper, "--sandbox", "stub", "--smoke-iters", "200", "--max-refine", "0"]
            assert main(["synth", *base_args, "--out", str(tmp_path / "warm"),
                         "--llm", llm_cfg("warm.json", "mock")]) == 0
            assert main(["synth", *base_args, "--out", str(tmp_path / "r1"),
                         "--llm", llm_cfg("r1.json", "replay")]) == 0
            assert main(["synth", *base_args, "--out", str(tmp_path / "r2"),
                         "--llm", llm_cfg("r2.json", "replay")]) == 0
            r1 = tree_bytes(tmp_path / "r1")
            r2 = tree_bytes(tmp_path / "r2")
            r1.pop("run_config.json"), r2.pop("run_config.json")  # differ by out path only
            assert r1 == r2
            assert tree_bytes(tmp_path / "r1" / "repo") == tree_bytes(tmp_path / "warm" / "repo")

            grammar = load_grammar()
            repo_dir = tmp_path / "r1" / "repo"
            files = load_repo_files(repo_dir)
            assert validate_repository(grammar, files, load_interfaces(repo_dir)).passed
            smoke = json.loads((tmp_path / "r1" / "smoke_report.json").read_text())
            ladder = ladder_evaluate(smoke, psnr_target=None)
            assert ladder.trainable

            # Refinement with never-improving scripts: exactly max_refine
            # iterations, every patch reverted, repository byte-equal.
            assert RefineConfig().max_refine == 5
            work = tmp_path / "refine_repo"
            shutil.copytree(repo_dir, work)
            before = tree_bytes(work)
            script = {
                "diagnose": [
                    {
                        "artifact_class": "floater",
                        "suspected_role": "Sampler",
                        "rationale": "persistent blob",
                        "patch": {
                            "target_file": "config.py",
                            "kind": "hyperparameter-change",
                            "payload": {"key": "learning_rate", "new_value": f"0.00{i}1"},
                        },
                    }
                    for i in range(1, 6)
                ]
            }
            script_path = tmp_path / "refine_script.json"
            script_path.write_text(json.dumps(script))
            gateway = LlmGateway(GatewayConfig(mode="mock", script_path=str(script_path)))
            sandbox = StubSandbox(psnr_schedule=[20.0, 19.0, 18.0, 17.0, 16.0, 15.0], inject_floater=True)
            cfg = RefineConfig(smoke_iters=50, psnr_target=35.0)
            result = refine(work, sandbox, gateway, cfg, tmp_path / "refine_out")
            assert len(result.history) == 5
            assert all(rec.decision == "reverted" for rec in result.history)
            assert tree_bytes(work) == before
            elapsed = time.monotonic() - start
            assert elapsed < 60.0, f"took {elapsed:.2f}s"

    def test_ladder_defaults(self):
        with criterion("ladder-defaults (tolerance 0.5 dB; smoke iters 3000)"):
            import inspect

            assert inspect.signature(ladder_evaluate).parameters["tolerance"].default == 0.5
            assert SynthConfig().smoke_iters == 3000
            assert inspect.signature(integration_test).parameters["iters"].default == 3000
            parser = build_parser()
            args = parser.parse_args(["synth", "--paper", "p", "--out", "o", "--llm", "l"])
            assert args.smoke_iters == 3000
            # Boundary behavior at the tolerance edge.
            from test_bench import good_report

            assert ladder_evaluate(good_report(24.5), psnr_target=25.0).converged
            assert not ladder_evaluate(good_report(24.4), psnr_target=25.0).converged
