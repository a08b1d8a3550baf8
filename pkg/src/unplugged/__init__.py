"""Desk-scale offline RL stack: delayed-action duel, replay data, reference agents, league evaluation."""

__version__ = "0.1.0"
