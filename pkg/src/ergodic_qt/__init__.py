"""Quasi tilings, almost-additive random fields and uniform ergodic averages on amenable groups."""
