__version__ = '0.1'
__url__ = 'http://libbifrost.rtfd.org/'
