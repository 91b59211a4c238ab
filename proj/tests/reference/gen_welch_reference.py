import numpy as np
from scipy import stats
cases = [
 (2.1,0.5,10,1.5,0.4,10),
 (1.92,0.87,3,-24.20,0.09,3),
 (1.92,0.87,3,-23.19,0.96,3),
 (-24.20,0.09,3,-23.19,0.96,3),
 (0.0,1.0,5,0.0,1.0,5),
 (1.0,1.0,10,0.0,1.0,10),
 (10.0,2.0,8,9.0,3.0,12),
 (5.5,0.1,4,5.4,2.5,30),
 (-3.0,1.5,2,-1.0,0.5,2),
 (100.0,15.0,50,95.0,20.0,45),
 (0.3,0.05,6,0.25,0.07,9),
 (7.0,3.0,3,1.0,0.5,20),
 (1.0,0.2,100,1.05,0.3,100),
 (0.888,0.029,3,0.273,0.008,3),
 (0.960,0.045,3,0.273,0.008,3),
 (12.0,4.0,15,3.0,1.0,4),
 (-0.5,0.8,7,0.5,0.8,7),
 (2.0,1e-3,5,2.0001,1e-3,5),
 (50.0,10.0,2,20.0,10.0,2),
 (0.01,0.02,25,-0.01,0.01,40),
]
print("// m_a, s_a, n_a, m_b, s_b, n_b, t, df, p, d")
for ma,sa,na,mb,sb,nb in cases:
    r = stats.ttest_ind_from_stats(ma,sa,na,mb,sb,nb,equal_var=False)
    va,vb = sa*sa/na, sb*sb/nb
    df = (va+vb)**2/(va*va/(na-1)+vb*vb/(nb-1))
    sp = np.sqrt(((na-1)*sa*sa+(nb-1)*sb*sb)/(na+nb-2))
    d = (ma-mb)/sp
    print("    {%r, %r, %d, %r, %r, %d, %.17g, %.17g, %.17g, %.17g}," % (ma,sa,na,mb,sb,nb,r.statistic,df,r.pvalue,d))
