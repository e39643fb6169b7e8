"""Published reference values for the two summary tables.

Rows are keyed by ``(ratio, L)``; each entry is
``(nsub, ndof, lambda_max, bd, fetidp, bddc_gmres, bddc_pcg)``.
"""

TABLE1 = {
    (3, 2): ("9", 100, 1.8781, 14, 9, 10, 10),
    (3, 3): ("81/9", 784, 3.2636, 23, 14, 15, 15),
    (3, 4): ("729/81/9", 6724, 5.3709, 29, 20, 21, 21),
    (3, 5): ("6561/729/81/9", 59536, 8.8857, 35, 27, 28, 29),
    (4, 2): ("16", 289, 2.1797, 10, 6, 12, 11),
    (4, 3): ("256/16", 4225, 4.1758, 29, 18, 19, 19),
    (4, 4): ("4096/256/16", 66049, 7.8472, 37, 27, 28, 29),
    (6, 2): ("36", 1369, 2.7982, 24, 14, 15, 15),
    (6, 3): ("1296/36", 47089, 6.0284, 36, 24, 25, 26),
}

TABLE2 = {
    (3, 2): ("9", 100, 1.0550, 8, 4, 4, 5),
    (3, 3): ("81/9", 784, 1.2866, 11, 8, 8, 8),
    (3, 4): ("729/81/9", 6724, 1.6980, 14, 11, 11, 11),
    (3, 5): ("6561/729/81/9", 59536, 2.1212, 17, 14, 14, 14),
    (4, 2): ("16", 289, 1.1094, 7, 4, 6, 6),
    (4, 3): ("256/16", 4225, 1.4779, 13, 9, 9, 9),
    (4, 4): ("4096/256/16", 66049, 1.9393, 17, 13, 13, 13),
    (6, 2): ("36", 1369, 1.2280, 13, 7, 7, 7),
    (6, 3): ("1296/36", 47089, 1.7775, 17, 11, 11, 11),
}

TABLES = {"table1": TABLE1, "table2": TABLE2}
