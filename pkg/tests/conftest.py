from __future__ import annotations

import pytest

from rankshift.corpus import CandidateSet, ProductRecord, Query


def make_set(texts, query="quiet blender", target_index=-1, category="Home & Kitchen"):
    items = tuple(
        ProductRecord(name=f"Item {i}", short_description=t, long_description="")
        for i, t in enumerate(texts)
    )
    return CandidateSet(Query(query, category), items, target_index)


@pytest.fixture
def small_set():
    return make_set(["quiet blender", "blender", "a kettle", "toaster"])
