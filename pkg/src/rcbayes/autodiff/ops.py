"""Opcode table shared by the recorder and both sweep kernels.

Binary arithmetic nodes whose second parent index is negative take their
right operand from the node's constant slot instead of from another node.
Input nodes always occupy tape positions ``0 .. n_inputs - 1``.
"""

INPUT = 0
CONST = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
NEG = 6
EXP = 7
LOG = 8
POW = 9  # node ** constant exponent
SIGMOID = 10
SOFTPLUS = 11
LOGADDEXP = 12
LGAMMA = 13
RSUB = 14  # constant - node
RDIV = 15  # constant / node

NAMES = {
    INPUT: "input",
    CONST: "constant",
    ADD: "add",
    SUB: "sub",
    MUL: "mul",
    DIV: "div",
    NEG: "neg",
    EXP: "exp",
    LOG: "log",
    POW: "pow",
    SIGMOID: "sigmoid",
    SOFTPLUS: "softplus",
    LOGADDEXP: "logaddexp",
    LGAMMA: "lgamma",
    RSUB: "rsub",
    RDIV: "rdiv",
}

# kernel status codes
OK = 0
DOMAIN = 1
NONFINITE = 2
