# Mismatch experiments module
