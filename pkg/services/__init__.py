"""
Services package for the coordination simulator
One module per subsystem; import the module you need
"""
