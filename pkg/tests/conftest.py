"""Shared fixtures and tiny fakes for the test suite."""

from __future__ import annotations

import math

import pytest

from kgcausal.kg import FORWARD, KnowledgeGraph, MetapathSubgraph, NodeRecord, EdgeRecord
from kgcausal.llm import Completion


def make_subgraph(names, types=None, labels=None, directions=None, ids=None):
    """Compact MetapathSubgraph builder for tests."""
    n = len(names)
    return MetapathSubgraph(
        node_ids=tuple(ids or [f"id_{x}" for x in names]),
        node_names=tuple(names),
        node_types=tuple(types if types is not None else [f"t{x}" for x in names]),
        edge_labels=tuple(labels if labels is not None else ["rel"] * (n - 1)),
        edge_directions=tuple(directions if directions is not None else [FORWARD] * (n - 1)),
    )


class FakeBackend:
    """Backend stub that replays scripted completions."""

    def __init__(self, completions):
        self.backend_id = "fake"
        self.parallelism = 1
        self.calls = 0
        self._completions = list(completions)

    @staticmethod
    def single(text, p=0.9):
        return Completion(text=text, tokens=((text, math.log(p)),), backend_id="fake")

    def complete(self, request):
        self.calls += 1
        item = self._completions[(self.calls - 1) % len(self._completions)]
        if isinstance(item, Exception):
            raise item
        return item


@pytest.fixture
def fgf6_path():
    """The gene-to-disease example path used throughout the prompt tests."""
    return make_subgraph(
        names=["FGF6", "tendon", "SDRDL", "FGFR2", "prostate cancer"],
        types=["Gene", "anatomy", "gene", "gene", "disease"],
        labels=["express", "express", "regulate", "associate"],
    )


@pytest.fixture
def hetionet_style_kg():
    """Small typed graph: one compound-gene-disease chain plus clutter."""
    nodes = [
        NodeRecord(id="n1", name="Aspirin", node_type="Compound"),
        NodeRecord(id="n2", name="PTGS2", node_type="Gene"),
        NodeRecord(id="n3", name="Headache", node_type="Disease"),
        NodeRecord(id="n4", name="IL6", node_type="Gene"),
        NodeRecord(id="n5", name="Liver", node_type="Anatomy"),
    ]
    edges = [
        EdgeRecord(head="n1", relation="TARGETS", tail="n2"),
        EdgeRecord(head="n2", relation="ASSOCIATED_WITH", tail="n3"),
        EdgeRecord(head="n1", relation="TARGETS", tail="n4"),
        EdgeRecord(head="n4", relation="ASSOCIATED_WITH", tail="n3"),
        EdgeRecord(head="n1", relation="AFFECTS", tail="n5"),
    ]
    return KnowledgeGraph(nodes, edges)
