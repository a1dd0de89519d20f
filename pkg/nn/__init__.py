"""數值核心：張量、網路層、儲備池與最佳化器"""
