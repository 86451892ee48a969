# 区组设计局部差分隐私分布估计
