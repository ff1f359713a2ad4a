import itertools

import numpy as np
import pytest

from nerfsynth.repograph import (
    CycleDetected,
    FileRecord,
    RepositoryGraph,
    UnknownNode,
    ancestors,
    build_repo_dag,
    reachability,
    scan_imports,
    topological_order,
)


def rec(path, role="Model", source=""):
    return FileRecord(file_id=path, path=path, role=role, source=source)


def chain_files():
    return [
        rec("config.py", "Config"),
        rec("datamanager.py", "DataManager", source="from .config import method_spec\n"),
        rec("model.py", "Model", source="from .datamanager import PluginDataManager\n"),
    ]


class TestBuildRepoDag:
    def test_chain_has_two_edges(self):
        graph = build_repo_dag(chain_files())
        assert graph.edges == {("config.py", "datamanager.py"), ("datamanager.py", "model.py")}

    def test_single_file_no_imports(self):
        graph = build_repo_dag([rec("model.py")])
        assert len(graph.files) == 1
        assert graph.edges == set()

    def test_mutual_import_is_a_cycle(self):
        files = [
            rec("a.py", source="from .b import thing\n"),
            rec("b.py", source="from .a import other\n"),
        ]
        with pytest.raises(CycleDetected) as err:
            build_repo_dag(files)
        assert set(err.value.cycle) == {"a.py", "b.py"}

    def test_external_imports_create_no_edges(self):
        files = [rec("model.py", source="import numpy\nfrom torch import nn\n")]
        assert build_repo_dag(files).edges == set()

    def test_subpackage_relative_import(self):
        files = [
            rec("pkg/encoders/hash.py", source=""),
            rec("pkg/model.py", source="from .encoders.hash import encode\n"),
        ]
        assert scan_imports(files) == {("pkg/encoders/hash.py", "pkg/model.py")}

    def test_absolute_repo_import(self):
        files = [
            rec("plugin/config.py"),
            rec("plugin/model.py", source="import plugin.config\n"),
        ]
        assert scan_imports(files) == {("plugin/config.py", "plugin/model.py")}

    def test_plan_edge_backfill_when_no_imports(self):
        files = [rec("config.py", "Config"), rec("model.py", "Model")]
        graph = build_repo_dag(files, plan_edges=[("config.py", "model.py")])
        assert graph.edges == {("config.py", "model.py")}

    def test_idempotent_over_serialized_output(self, tmp_path):
        graph = build_repo_dag(chain_files())
        path = tmp_path / "repo_graph.json"
        graph.save(path)
        import json

        loaded = RepositoryGraph.from_dict(json.loads(path.read_text()))
        assert loaded.to_dict() == graph.to_dict()


class TestTopologicalOrder:
    def test_empty_graph(self):
        assert topological_order(RepositoryGraph(files={}, edges=set())) == []

    def test_chain_order(self):
        graph = build_repo_dag(chain_files())
        assert topological_order(graph) == ["config.py", "datamanager.py", "model.py"]

    def test_deterministic_tiebreak(self):
        files = [rec(p) for p in ("z.py", "a.py", "m.py")]
        graph = build_repo_dag(files)
        assert topological_order(graph) == ["a.py", "m.py", "z.py"]

    def test_random_dag_order_consistent_with_every_edge(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = 7
            names = [f"f{i}.py" for i in range(n)]
            perm = rng.permutation(n)
            edges = set()
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < 0.3:
                        edges.add((names[perm[i]], names[perm[j]]))
            graph = RepositoryGraph(files={nm: rec(nm) for nm in names}, edges=edges)
            order = topological_order(graph)
            pos = {nm: k for k, nm in enumerate(order)}
            assert all(pos[u] < pos[v] for u, v in edges)
            # Permutation oracle: the returned order is one of the valid ones.
            valid = [
                p
                for p in itertools.permutations(names)
                if all(p.index(u) < p.index(v) for u, v in edges)
            ]
            assert tuple(order) in valid


class TestReachability:
    def test_chain_forward(self):
        graph = build_repo_dag(chain_files())
        assert reachability(graph, "config.py", "model.py") is True

    def test_chain_backward(self):
        graph = build_repo_dag(chain_files())
        assert reachability(graph, "model.py", "config.py") is False

    def test_unknown_node(self):
        graph = build_repo_dag(chain_files())
        with pytest.raises(UnknownNode):
            reachability(graph, "config.py", "nope.py")

    def test_matches_closure_oracle_random(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = 8
            names = [f"n{i}.py" for i in range(n)]
            mat = np.zeros((n, n), dtype=bool)
            perm = list(rng.permutation(n))
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < 0.25:
                        mat[perm[i], perm[j]] = True
            closure = mat.copy()
            for _ in range(n):
                closure = closure | (closure @ mat)
            graph = RepositoryGraph(
                files={nm: rec(nm) for nm in names},
                edges={(names[i], names[j]) for i in range(n) for j in range(n) if mat[i, j]},
            )
            for i in range(n):
                for j in range(n):
                    if i != j:
                        assert reachability(graph, names[i], names[j]) == bool(closure[i, j])

    def test_ancestors(self):
        graph = build_repo_dag(chain_files())
        assert ancestors(graph, "model.py") == {"config.py", "datamanager.py"}
