"""Unconstrained quadratic costs on a 126-node digraph (linear rate)."""

from _common import main

if __name__ == "__main__":
    main("quadratic.json", __doc__)
