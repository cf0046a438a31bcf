"""Joint transmit-power and RIS phase optimisation for resource efficiency."""
