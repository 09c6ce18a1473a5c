from enum import IntEnum


class Label(IntEnum):
    """The six Fakeddit categories, in the order used for every matrix and table."""

    TRUE = 0
    MANIPULATED_CONTENT = 1
    FALSE_CONNECTION = 2
    SATIRE = 3
    MISLEADING_CONTENT = 4
    IMPOSTER_CONTENT = 5

    @property
    def display(self) -> str:
        return DISPLAY_NAMES[self]


DISPLAY_NAMES = {
    Label.TRUE: "True",
    Label.MANIPULATED_CONTENT: "Manipulated content",
    Label.FALSE_CONNECTION: "False connection",
    Label.SATIRE: "Satire",
    Label.MISLEADING_CONTENT: "Misleading content",
    Label.IMPOSTER_CONTENT: "Imposter content",
}

NUM_CLASSES = len(Label)

FAKE_CLASSES = (
    Label.MANIPULATED_CONTENT,
    Label.FALSE_CONNECTION,
    Label.SATIRE,
    Label.MISLEADING_CONTENT,
    Label.IMPOSTER_CONTENT,
)

SPLITS = ("train", "validation", "test")
