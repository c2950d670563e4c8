"""Reference values computed once with mpmath at 30 digits and frozen here.

c_{n,s}       s 4^s Gamma(n/2+s) / (pi^(n/2) Gamma(1-s))
GAUSS_FL      4^s Gamma(n/2+s)/Gamma(n/2) 1F1(n/2+s; n/2; -r^2), r in (0, 0.5, 1, 2)
XI            sum_k x^k / (k!)^(n/2+s)
TORSION       Gamma(n/2) / (4^s Gamma(1+s) Gamma(n/2+s)), the constant of (1-|x|^2)_+^s
GAUSS_TAIL    r^(2s) pi Gamma(-s, r^2) for f = exp(-|y|^2), n = 2, x0 = 0
RIESZ_DISC    int_{B_1} |(2, 0) - y|^-1 dy
"""

C_NS = {
    (1, 0.3): 0.2300963816816321, (1, 0.5): 0.31830988618379067, (1, 0.7): 0.31988109866734784,
    (2, 0.3): 0.10007289206487784, (2, 0.5): 0.15915494309189534, (2, 0.7): 0.17860038243844473,
}

GAUSS_R = (0.0, 0.5, 1.0, 2.0)
GAUSS_FL = {
    (1, 0.3): (0.99559278421583461, 0.6518749204035534, 0.080934527441429404, -0.17072480393598337),
    (1, 0.5): (1.1283791670955126, 0.6494539941944691, -0.085936244587274884, -0.23172570116875223),
    (1, 0.7): (1.3670662493152458, 0.68230019361936968, -0.28612080598939609, -0.26456137860261922),
    (2, 0.3): (1.3603112023490467, 0.9763080349659989, 0.31808650093931549, -0.0645627211570432),
    (2, 0.5): (1.772453850905516, 1.2022139828743147, 0.27724865496675965, -0.11423077019607407),
    (2, 0.7): (2.3979119920691506, 1.5343267612946131, 0.21053515287803476, -0.16122635263208127),
}

XI = {(1.0, 2, 0.5): 2.430915354722855, (3.0, 2, 0.3): 12.248795359426212}

TORSION = {(1, 0.3): 1.1191749540701223, (1, 0.7): 0.80504321284716261,
           (2, 0.3): 0.81910852944765704, (2, 0.7): 0.45896071630802717}

GAUSS_TAIL = {(0.5, 1.0): 0.55966754258678292, (0.3, 0.5): 2.5709502917629648}

RIESZ_DISC = 1.6251955458398406
