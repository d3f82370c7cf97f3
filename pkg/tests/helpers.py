import math

from hypothesis import strategies as st

from controlled_teleport.protocol import MessageState


def random_messages(rng, count):
    return tuple(MessageState.random(rng) for _ in range(count))


angles = st.tuples(
    st.floats(0.0, math.pi, allow_nan=False),
    st.floats(0.0, 2 * math.pi, allow_nan=False, exclude_max=True),
)
messages = angles.map(lambda tp: MessageState.from_angles(*tp))
