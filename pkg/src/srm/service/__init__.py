"""HTTP service exposing experiments and live top-m monitors."""
