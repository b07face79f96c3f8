"""Quartic costs with the local box [-2, 2]."""

from _common import main

if __name__ == "__main__":
    main("quartic_box.json", __doc__)
