"""Quartic costs without Lipschitz gradients on the same graph."""

from _common import main

if __name__ == "__main__":
    main("quartic.json", __doc__)
