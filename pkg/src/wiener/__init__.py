# Wiener functional quantization module
