# Quadrature module
