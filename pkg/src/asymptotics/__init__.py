# Asymptotics module
