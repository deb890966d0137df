# Accident-scenario datasets and the SECF on-disk format
