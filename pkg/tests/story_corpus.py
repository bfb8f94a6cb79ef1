"""Offline stories for splitter tests: (story, target prompt count)."""

import re

# a prompt counts as single-clause if it has no sentence break and no
# temporal connective left inside it
_MULTI_CLAUSE = re.compile(r"[.;!?]|,\s+then\s+|\bafter that\b", re.IGNORECASE)


def is_single_clause(prompt: str) -> bool:
    return not _MULTI_CLAUSE.search(prompt)


STORY_CORPUS = [
    (
        "The dog runs across the wide field, then comes to a halt, yawns softly, and lies down.",
        4,
    ),
    (
        "A sailboat drifts into the harbor. It lowers its sail. The crew steps onto the dock.",
        3,
    ),
    (
        "The chef chops the onions, then stirs the simmering pot, and finally plates the dish.",
        3,
    ),
    (
        "A hawk circles above the canyon. Then the hawk folds its wings and dives toward the river.",
        2,
    ),
    (
        "The train pulls out of the station, gathers speed through the tunnel, and bursts into the sunlight.",
        3,
    ),
    (
        "A child builds a sandcastle near the tide. The waves creep closer. Eventually the water "
        "washes the castle away.",
        3,
    ),
    (
        "The painter dips the brush, sweeps a long blue arc across the canvas, steps back, and smiles.",
        4,
    ),
    (
        "Snow starts falling over the quiet village. The rooftops turn white. Lights flicker on in the windows.",
        3,
    ),
    (
        "A street musician opens the violin case, tunes the strings, and begins to play for the crowd.",
        3,
    ),
    (
        "The old lighthouse keeper climbs the spiral stairs, lights the great lamp, and watches the beam "
        "sweep over the dark water.",
        3,
    ),
]
