"""Services package: verificación, reportes y almacenamiento"""
