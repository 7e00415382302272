"""Class labels for the 18 recognized actions.

Index order is frozen: it is the serialization order for weight files,
confusion matrices and dataset files. Indices 0-9 are in-place body actions,
10-17 are head gestures. INVALID (-1) is only ever produced by the real-time
recognizer, never by training data.
"""

from enum import IntEnum


class ClassLabel(IntEnum):
    BEING_IDLE = 0
    STEPPING_IN_PLACE = 1
    STEPPING_FORWARD = 2
    STEPPING_BACKWARD = 3
    STRAFING_LEFT = 4
    STRAFING_RIGHT = 5
    SQUATTING_DOWN = 6
    STANDING_UP = 7
    JUMPING = 8
    JOGGING_IN_PLACE = 9
    ROTATING_LEFT = 10
    ROTATING_RIGHT = 11
    TILTING_UP = 12
    TILTING_DOWN = 13
    LEANING_LEFT = 14
    LEANING_RIGHT = 15
    NODDING = 16
    SHAKING = 17

    INVALID = -1

    @property
    def canonical_name(self) -> str:
        return self.name.lower()


N_CLASSES = 18

BODY_CLASSES = tuple(ClassLabel(i) for i in range(10))
HEAD_CLASSES = tuple(ClassLabel(i) for i in range(10, 18))

# Classes whose raw output score must clear a calibrated threshold before
# the recognizer accepts them.
GATED_CLASSES = (
    ClassLabel.JOGGING_IN_PLACE,
    ClassLabel.NODDING,
    ClassLabel.SHAKING,
)

_BY_NAME = {label.canonical_name: label for label in ClassLabel}


def label_from_name(name: str) -> ClassLabel:
    try:
        return _BY_NAME[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown class name: {name!r}") from None
