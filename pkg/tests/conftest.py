"""Shared scenario text builder for integration tests."""

import pytest

FENCE_YAML = """
  fence:
    - [53.000, -3.000]
    - [53.012, -3.000]
    - [53.012, -2.978]
    - [53.000, -2.978]
"""


def scenario_text(
    *,
    seed=42,
    duration_s=7200,
    soil_nodes=2,
    sheep_nodes=1,
    short_loss=0.0,
    long_loss=0.0,
    extra="",
    node_extra="",
    drain=True,
):
    nodes = []
    for i in range(1, soil_nodes + 1):
        nodes.append(
            f"  - {{id: soil-{i}, kind: soil, position: [53.00{i}, -2.99{i}], "
            f"groups: [soil]{node_extra}}}"
        )
    for i in range(1, sheep_nodes + 1):
        nodes.append(
            f"  - {{id: sheep-{i}, kind: livestock, position: [53.005, -2.99], "
            f"groups: [sheep]{node_extra}}}"
        )
    return (
        f"format: 1\n"
        f"seed: {seed}\n"
        f"duration_s: {duration_s}\n"
        f"drain: {'true' if drain else 'false'}\n"
        f"environment:\n{FENCE_YAML}\n"
        f"nodes:\n" + "\n".join(nodes) + "\n"
        f"links:\n"
        f"  short: {{loss_prob: {short_loss}}}\n"
        f"  long: {{loss_prob: {long_loss}}}\n"
        + extra
    )


@pytest.fixture
def store_dir(tmp_path):
    return str(tmp_path / "store")
