"""metersim: a simulated fleet of smart electricity meters.

Virtual meter nodes synthesize appliance voltage/current waveforms, estimate
power quantities through an emulated metering front end, and report readings
over a small UDP protocol to a coordinator that persists them and exposes an
HTTP API for dashboards and control.
"""

__version__ = "0.1.0"
