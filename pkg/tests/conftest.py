import json

import pytest

from evclosure.semantics import Structure, WorldModel

BIDEN_2020 = "joe biden won the 2020 presidential election"
TRUMP_2016 = "donald trump won the 2016 presidential election"
TRUMP_2020 = "donald trump won the 2020 presidential election"
BIDEN_2016 = "joe biden won the 2016 presidential election"

EIFFEL = "The Eiffel Tower is the tallest building in France"
EIFFEL_DOUBLE_NEG = "It is not the case that the Eiffel Tower is not the tallest building in France"


def make_election_world() -> WorldModel:
    """Four election claims over four states; only two actually obtain."""
    reference = {
        BIDEN_2020: "biden-won-2020",
        TRUMP_2016: "trump-won-2016",
        TRUMP_2020: "trump-won-2020",
        BIDEN_2016: "biden-won-2016",
    }
    v0 = Structure(
        name="s0",
        valuation={
            "biden-won-2020": 1,
            "trump-won-2016": 1,
            "trump-won-2020": 0,
            "biden-won-2016": 0,
        },
    )
    return WorldModel(
        states=tuple(sorted(set(reference.values()))),
        structures=(v0,),
        reference=reference,
    )


@pytest.fixture
def election_world() -> WorldModel:
    return make_election_world()


@pytest.fixture
def election_corpus() -> list[str]:
    # verified: both strings are true under the designated structure
    return [BIDEN_2020, TRUMP_2016]


def write_jsonl(path, rows) -> str:
    path.write_text("\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n", encoding="utf-8")
    return str(path)
