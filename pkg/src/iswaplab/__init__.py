"""Desk-scale replica of a phase-coherent two-qubit iSWAP experiment.

The package couples a software model of a multi-port direct-digital-synthesis
sequencer (NCO + IF carrier generators on a 2 ns event grid) to a simulated
two-transmon device with a parametric coupler, and layers the full gate
workflow on top: spectroscopy, amplitude/frequency/duration calibration,
coupler-phase tuning with virtual-Z compensation, state tomography, and
interleaved randomized benchmarking.
"""

__version__ = "0.1.0"
