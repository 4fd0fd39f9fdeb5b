"""Amplifier analyses: device model, DC solver, small-signal, distortion and mismatch."""
