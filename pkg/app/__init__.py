# App package

