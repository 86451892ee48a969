# 服务层
