"""Analysis and simulation of a three-photon polarization GHZ source.

Modules:

- ``polarization``: states, measurement settings, expectations
- ``ghz``: GHZ states, Mermin test, fidelity and entanglement witness
- ``rates``: closed-form coincidence rates of the source
- ``montecarlo``: seeded simulation of the source
- ``config`` and ``cli``: the ``ghz-source`` command line
"""

__version__ = "0.1.0"
