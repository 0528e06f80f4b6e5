"""Utils package: logging y jerarquía de errores"""
