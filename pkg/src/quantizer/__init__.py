# Quantizer module
