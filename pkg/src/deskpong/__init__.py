"""deskpong: a desk-scale table-tennis control stack.

Deterministic rigid-ball physics with two paddle-arm agents, adversarial
skill imitation, per-skill ball-control policies, a joint-wise mixer,
CVAE strategy learning via iterative behavior cloning, an agent-agent
match harness, and a realtime human-vs-agent play service.
"""

__version__ = "0.1.0"
