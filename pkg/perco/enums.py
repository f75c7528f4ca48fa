"""
MIT License

Copyright (c) 2024 the perco.py developers

Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""
from enum import Enum, IntEnum


class ExtendedEnum(Enum):
    """An Enum class that allows for the `__str__` method to be implemented."""
    def __str__(self):
        return self.display_name

    def __eq__(self, other):
        """Check if the enum is equal to another enum or a string."""
        if isinstance(other, Enum):
            return self.value == other.value
        elif isinstance(other, str):
            return str(self.name) == other or str(self.value) == other
        return False

    def __hash__(self):
        return hash(self.value)

    @property
    def display_name(self) -> str:
        raise NotImplementedError

    @classmethod
    def values(cls):
        return list(map(lambda c: c.value, cls))

    @classmethod
    def names(cls):
        return list(map(lambda c: c.name, cls))


class ModelKind(ExtendedEnum):
    """Enum to map the measure family a configuration is sampled from."""

    bernoulli = "bernoulli"
    gff_level = "gff-level"
    interlacement = "interlacement"
    vacant_interlacement = "vacant-interlacement"

    @property
    def display_name(self) -> str:
        """Get a neat human-facing string value for the model."""
        lookup = {
            "bernoulli": "Bernoulli site percolation",
            "gff-level": "Gaussian free field level set",
            "interlacement": "Random interlacement trace",
            "vacant-interlacement": "Vacant set of random interlacements",
        }
        return lookup[self.value]

    @property
    def increasing(self) -> bool:
        """Whether the occupied set grows with the parameter ``u``."""
        return self in (ModelKind.bernoulli, ModelKind.interlacement)

    @property
    def min_dimension(self) -> int:
        return 2 if self is ModelKind.bernoulli else 3


class Check(ExtendedEnum):
    """Enum to map the checks an experiment can enable.

    The order of declaration is the order in which the pipeline runs them.
    """

    clusters = "clusters"
    goodness = "goodness"
    event_h = "event-h"
    fat_set = "fat-set"
    isoperimetry = "isoperimetry"
    walk = "walk"
    corrector = "corrector"

    @property
    def display_name(self) -> str:
        lookup = {
            "clusters": "A1-A4 and local uniqueness predicates",
            "goodness": "k-good classification",
            "event-h": "Event H",
            "fat-set": "Fat set contract",
            "isoperimetry": "Isoperimetric profile and reduction inequalities",
            "walk": "Random walk diagnostics",
            "corrector": "Corrector sublinearity",
        }
        return lookup[self.value]


class CandidateMethod(ExtendedEnum):
    """Enum to map the family an isoperimetric candidate set was drawn from."""

    ball = "ball"
    sweep = "sweep"
    greedy = "greedy"
    exhaustive = "exhaustive"
    connected = "connected"

    @property
    def display_name(self) -> str:
        lookup = {
            "ball": "Chemical ball",
            "sweep": "Spectral sweep",
            "greedy": "Greedy local search",
            "exhaustive": "Exhaustive enumeration",
            "connected": "Connected-subset enumeration",
        }
        return lookup[self.value]


class Stream(IntEnum):
    """Documented random stream ids.

    Every generator is keyed on ``(seed, stream, *indices)``, so two consumers never
    share draws and a replica's draws do not depend on which worker runs it.
    """

    SITES = 0
    FIELD = 1
    WALK = 2
    START = 3
    REPLICA = 4
    ENSEMBLE = 5
    CANDIDATES = 6
    SLICES = 7
