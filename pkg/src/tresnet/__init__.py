"""Next-interval maximum CPU utilization forecasting for cloud VMs.

Three residual 1-D convolutional branches look at a VM's recent history at
three sampling rates (every interval, hourly, daily) and a dense sigmoid head
fuses them into one prediction.
"""

__version__ = "0.1.0"
