"""Reference grid for the Composite Heston test case (spot 100, zero rate).

Rows are (moneyness K/S0, maturity in years, CTC-COS price, implied volatility).
"""

REFERENCE_GRID = [
    (1.0, 0.02, 0.9293, 0.1647),
    (0.9, 0.05, 10.1159, 0.2813),
    (1.0, 0.05, 1.5805, 0.1772),
    (1.1, 0.05, 0.0173, 0.1874),
    (0.8, 0.1, 20.0877, 0.3548),
    (0.9, 0.1, 10.4737, 0.2788),
    (1.0, 0.1, 2.4958, 0.1979),
    (1.1, 0.1, 0.1521, 0.1902),
    (0.8, 0.15, 20.2457, 0.3482),
    (0.9, 0.15, 10.9084, 0.2805),
    (1.0, 0.15, 3.3141, 0.2146),
    (1.1, 0.15, 0.4108, 0.1977),
    (0.7, 0.2, 30.1369, 0.4039),
    (0.8, 0.2, 20.4502, 0.344),
    (0.9, 0.2, 11.3681, 0.2836),
    (1.0, 0.2, 4.0634, 0.2279),
    (1.1, 0.2, 0.7634, 0.207),
    (1.2, 0.2, 0.1411, 0.2219),
    (0.6, 0.3, 40.1203, 0.4437),
    (0.7, 0.3, 30.3522, 0.3904),
    (0.8, 0.3, 20.9276, 0.3392),
    (0.9, 0.3, 12.2883, 0.2901),
    (1.0, 0.3, 5.4028, 0.2474),
    (1.1, 0.3, 1.6247, 0.2249),
    (1.2, 0.3, 0.4321, 0.2272),
    (0.6, 0.5, 40.376, 0.4156),
    (0.7, 0.5, 30.8987, 0.3737),
    (0.8, 0.5, 21.9617, 0.3351),
    (0.9, 0.5, 13.9954, 0.3002),
    (1.0, 0.5, 7.636, 0.2711),
    (1.1, 0.5, 3.4802, 0.2515),
    (1.2, 0.5, 1.4046, 0.2438),
    (0.6, 0.7, 40.6905, 0.3978),
    (0.7, 0.7, 31.5027, 0.3639),
    (0.8, 0.7, 22.9855, 0.3336),
    (0.9, 0.7, 15.5063, 0.3069),
    (1.0, 0.7, 9.4844, 0.2848),
    (1.1, 0.7, 5.2188, 0.2685),
    (1.2, 0.7, 2.6356, 0.2588),
    (0.6, 0.9, 41.0381, 0.3859),
    (0.7, 0.9, 32.125, 0.3577),
    (0.8, 0.9, 23.9659, 0.333),
    (0.9, 0.9, 16.8586, 0.3116),
    (1.0, 0.9, 11.0831, 0.2938),
    (1.1, 0.9, 6.7949, 0.28),
    (1.2, 0.9, 3.9225, 0.2703),
    (1.3, 0.9, 2.1762, 0.2646),
]
