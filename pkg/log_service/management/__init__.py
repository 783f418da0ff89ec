# This file is required for Django to recognize the 'commands' directory. 